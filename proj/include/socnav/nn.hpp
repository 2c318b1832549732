#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "socnav/rng.hpp"

namespace socnav::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// A learnable block with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

using ParameterList = std::vector<Parameter*>;

void zero_grad(const ParameterList& params);
double grad_norm(const ParameterList& params);

enum class Init { HeUniform, XavierUniform, Scaled };

// ---------------------------------------------------------------------------
// Layers. Forward passes are const and write what backward needs into a
// caller-owned cache, so one parameter set can serve several threads.

class Dense {
 public:
  struct Cache {
    Matrix input;
  };

  Dense() = default;
  Dense(const std::string& name, int in, int out);

  void init(Rng& rng, Init scheme, double scale = 1.0);
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Matrix& dy, const Cache& cache);
  ParameterList parameters() { return {&weight_, &bias_}; }

  int in() const { return static_cast<int>(weight_.value.rows()); }
  int out() const { return static_cast<int>(weight_.value.cols()); }

 private:
  Parameter weight_;  // in × out
  Parameter bias_;    // 1 × out
};

/// Shape of a square feature map stored as (batch·side², channels) rows.
struct MapShape {
  int side = 5;
  int positions() const { return side * side; }
};

/// Gathers 3×3 zero-padded neighbourhoods: (N·P, C) → (N·P, 9·C).
Matrix im2col(const Matrix& x, MapShape shape);
/// Adjoint of im2col: scatter-adds (N·P, 9·C) back onto (N·P, C).
Matrix col2im(const Matrix& cols, MapShape shape, int channels);

/// 3×3 convolution, stride 1, same padding.
class Conv2d {
 public:
  struct Cache {
    Matrix cols;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, MapShape shape, int in_channels, int out_channels);

  void init(Rng& rng, Init scheme, double scale = 1.0);
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Matrix& dy, const Cache& cache);
  ParameterList parameters() { return {&weight_, &bias_}; }

 private:
  MapShape shape_;
  int in_channels_ = 0;
  Parameter weight_;  // 9·in × out
  Parameter bias_;
};

/// 3×3 transposed convolution, stride 1, padding 1 (output keeps the map size).
/// Each input position scatters a weighted 3×3 stamp onto the output.
class ConvTranspose2d {
 public:
  struct Cache {
    Matrix input;
  };

  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& name, MapShape shape, int in_channels, int out_channels);

  void init(Rng& rng, Init scheme, double scale = 1.0);
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Matrix& dy, const Cache& cache);
  ParameterList parameters() { return {&weight_, &bias_}; }

 private:
  MapShape shape_;
  int out_channels_ = 0;
  Parameter weight_;  // in × 9·out
  Parameter bias_;
};

/// Single-head scaled dot-product self-attention over the positions of each
/// map, with an output projection and a residual connection.
class SelfAttention {
 public:
  struct Cache {
    Matrix input, q, k, v, attn, mixed;
  };

  SelfAttention() = default;
  SelfAttention(const std::string& name, int tokens, int dim);

  void init(Rng& rng);
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Matrix& dy, const Cache& cache);
  ParameterList parameters() { return {&wq_, &wk_, &wv_, &wo_, &bo_}; }

 private:
  int tokens_ = 0;
  int dim_ = 0;
  Parameter wq_, wk_, wv_, wo_, bo_;
};

struct ReluCache {
  Matrix output;
};
Matrix relu(const Matrix& x, ReluCache* cache = nullptr);
Matrix relu_backward(const Matrix& dy, const ReluCache& cache);

/// Adaptive-moment optimizer over a fixed parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterList& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const ParameterList& params);
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void restore(long t, std::vector<Matrix> m, std::vector<Matrix> v);

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace socnav::nn
