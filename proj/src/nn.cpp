#include "socnav/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace socnav::nn {

void zero_grad(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

double grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

namespace {

void fill(Parameter& p, Rng& rng, Init scheme, double fan_in, double fan_out, double scale) {
  double bound = 0.0;
  switch (scheme) {
    case Init::HeUniform: bound = std::sqrt(6.0 / fan_in); break;
    case Init::XavierUniform: bound = std::sqrt(6.0 / (fan_in + fan_out)); break;
    case Init::Scaled: bound = 1.0; break;
  }
  bound *= scale;
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-bound, bound);
}

void check_cols(const Matrix& x, Eigen::Index cols, const char* what) {
  if (x.cols() != cols) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(cols) +
                                " columns, got " + std::to_string(x.cols()));
  }
}

}  // namespace

// --- Dense ------------------------------------------------------------------

Dense::Dense(const std::string& name, int in, int out)
    : weight_(name + ".weight", in, out), bias_(name + ".bias", 1, out) {}

void Dense::init(Rng& rng, Init scheme, double scale) {
  fill(weight_, rng, scheme, static_cast<double>(in()), static_cast<double>(out()), scale);
  bias_.value.setZero();
}

Matrix Dense::forward(const Matrix& x, Cache* cache) const {
  check_cols(x, weight_.value.rows(), "dense");
  if (cache) cache->input = x;
  Matrix y = x * weight_.value;
  y.rowwise() += bias_.value.row(0);
  return y;
}

Matrix Dense::backward(const Matrix& dy, const Cache& cache) {
  weight_.grad.noalias() += cache.input.transpose() * dy;
  bias_.grad.row(0) += dy.colwise().sum();
  return dy * weight_.value.transpose();
}

// --- im2col -----------------------------------------------------------------

Matrix im2col(const Matrix& x, MapShape shape) {
  const int p = shape.positions();
  const int side = shape.side;
  const auto c = x.cols();
  const auto n = x.rows() / p;
  Matrix cols = Matrix::Zero(x.rows(), 9 * c);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int r = 0; r < side; ++r) {
      for (int q = 0; q < side; ++q) {
        const Eigen::Index row = s * p + r * side + q;
        for (int k = 0; k < 9; ++k) {
          const int rr = r + k / 3 - 1;
          const int qq = q + k % 3 - 1;
          if (rr < 0 || qq < 0 || rr >= side || qq >= side) continue;
          cols.block(row, k * c, 1, c) = x.row(s * p + rr * side + qq);
        }
      }
    }
  }
  return cols;
}

Matrix col2im(const Matrix& cols, MapShape shape, int channels) {
  const int p = shape.positions();
  const int side = shape.side;
  const auto n = cols.rows() / p;
  Matrix x = Matrix::Zero(cols.rows(), channels);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int r = 0; r < side; ++r) {
      for (int q = 0; q < side; ++q) {
        const Eigen::Index row = s * p + r * side + q;
        for (int k = 0; k < 9; ++k) {
          const int rr = r + k / 3 - 1;
          const int qq = q + k % 3 - 1;
          if (rr < 0 || qq < 0 || rr >= side || qq >= side) continue;
          x.row(s * p + rr * side + qq) += cols.block(row, k * channels, 1, channels);
        }
      }
    }
  }
  return x;
}

// --- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(const std::string& name, MapShape shape, int in_channels, int out_channels)
    : shape_(shape),
      in_channels_(in_channels),
      weight_(name + ".weight", 9 * in_channels, out_channels),
      bias_(name + ".bias", 1, out_channels) {}

void Conv2d::init(Rng& rng, Init scheme, double scale) {
  fill(weight_, rng, scheme, 9.0 * in_channels_, 9.0 * static_cast<double>(weight_.value.cols()), scale);
  bias_.value.setZero();
}

Matrix Conv2d::forward(const Matrix& x, Cache* cache) const {
  check_cols(x, in_channels_, "conv2d");
  Matrix cols = im2col(x, shape_);
  Matrix y = cols * weight_.value;
  y.rowwise() += bias_.value.row(0);
  if (cache) cache->cols = std::move(cols);
  return y;
}

Matrix Conv2d::backward(const Matrix& dy, const Cache& cache) {
  weight_.grad.noalias() += cache.cols.transpose() * dy;
  bias_.grad.row(0) += dy.colwise().sum();
  return col2im(dy * weight_.value.transpose(), shape_, in_channels_);
}

// --- ConvTranspose2d --------------------------------------------------------

ConvTranspose2d::ConvTranspose2d(const std::string& name, MapShape shape, int in_channels,
                                 int out_channels)
    : shape_(shape),
      out_channels_(out_channels),
      weight_(name + ".weight", in_channels, 9 * out_channels),
      bias_(name + ".bias", 1, out_channels) {}

void ConvTranspose2d::init(Rng& rng, Init scheme, double scale) {
  fill(weight_, rng, scheme, 9.0 * static_cast<double>(weight_.value.rows()), 9.0 * out_channels_, scale);
  bias_.value.setZero();
}

Matrix ConvTranspose2d::forward(const Matrix& x, Cache* cache) const {
  check_cols(x, weight_.value.rows(), "conv_transpose2d");
  if (cache) cache->input = x;
  Matrix y = col2im(x * weight_.value, shape_, out_channels_);
  y.rowwise() += bias_.value.row(0);
  return y;
}

Matrix ConvTranspose2d::backward(const Matrix& dy, const Cache& cache) {
  const Matrix stamps = im2col(dy, shape_);
  weight_.grad.noalias() += cache.input.transpose() * stamps;
  bias_.grad.row(0) += dy.colwise().sum();
  return stamps * weight_.value.transpose();
}

// --- SelfAttention ----------------------------------------------------------

SelfAttention::SelfAttention(const std::string& name, int tokens, int dim)
    : tokens_(tokens),
      dim_(dim),
      wq_(name + ".wq", dim, dim),
      wk_(name + ".wk", dim, dim),
      wv_(name + ".wv", dim, dim),
      wo_(name + ".wo", dim, dim),
      bo_(name + ".bo", 1, dim) {}

void SelfAttention::init(Rng& rng) {
  for (Parameter* p : {&wq_, &wk_, &wv_}) fill(*p, rng, Init::XavierUniform, dim_, dim_, 1.0);
  // Start close to the identity map through the residual path.
  fill(wo_, rng, Init::XavierUniform, dim_, dim_, 0.1);
  bo_.value.setZero();
}

Matrix SelfAttention::forward(const Matrix& x, Cache* cache) const {
  check_cols(x, dim_, "self_attention");
  const Eigen::Index n = x.rows() / tokens_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  Matrix q = x * wq_.value;
  Matrix k = x * wk_.value;
  Matrix v = x * wv_.value;
  Matrix attn(x.rows(), tokens_);
  Matrix mixed(x.rows(), dim_);
  for (Eigen::Index s = 0; s < n; ++s) {
    const Eigen::Index r0 = s * tokens_;
    Matrix scores = q.middleRows(r0, tokens_) * k.middleRows(r0, tokens_).transpose() * scale;
    for (Eigen::Index i = 0; i < tokens_; ++i) {
      auto row = scores.row(i);
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
    }
    mixed.middleRows(r0, tokens_).noalias() = scores * v.middleRows(r0, tokens_);
    attn.middleRows(r0, tokens_) = scores;
  }
  Matrix y = x + mixed * wo_.value;
  y.rowwise() += bo_.value.row(0);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
    cache->mixed = std::move(mixed);
  }
  return y;
}

Matrix SelfAttention::backward(const Matrix& dy, const Cache& c) {
  const Eigen::Index n = dy.rows() / tokens_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  wo_.grad.noalias() += c.mixed.transpose() * dy;
  bo_.grad.row(0) += dy.colwise().sum();
  const Matrix dmixed = dy * wo_.value.transpose();

  Matrix dq(dy.rows(), dim_), dk(dy.rows(), dim_), dv(dy.rows(), dim_);
  for (Eigen::Index s = 0; s < n; ++s) {
    const Eigen::Index r0 = s * tokens_;
    const auto a = c.attn.middleRows(r0, tokens_);
    const auto dm = dmixed.middleRows(r0, tokens_);
    Matrix da = dm * c.v.middleRows(r0, tokens_).transpose();
    dv.middleRows(r0, tokens_).noalias() = a.transpose() * dm;
    Eigen::VectorXd inner = (a.array() * da.array()).rowwise().sum();
    Matrix ds = a.array() * (da.colwise() - inner).array();
    dq.middleRows(r0, tokens_).noalias() = ds * c.k.middleRows(r0, tokens_) * scale;
    dk.middleRows(r0, tokens_).noalias() = ds.transpose() * c.q.middleRows(r0, tokens_) * scale;
  }
  wq_.grad.noalias() += c.input.transpose() * dq;
  wk_.grad.noalias() += c.input.transpose() * dk;
  wv_.grad.noalias() += c.input.transpose() * dv;
  Matrix dx = dy;
  dx.noalias() += dq * wq_.value.transpose();
  dx.noalias() += dk * wk_.value.transpose();
  dx.noalias() += dv * wv_.value.transpose();
  return dx;
}

// --- activations ------------------------------------------------------------

Matrix relu(const Matrix& x, ReluCache* cache) {
  Matrix y = x.cwiseMax(0.0);
  if (cache) cache->output = y;
  return y;
}

Matrix relu_backward(const Matrix& dy, const ReluCache& cache) {
  return (cache.output.array() > 0.0).select(dy, 0.0);
}

// --- Adam -------------------------------------------------------------------

Adam::Adam(const ParameterList& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Parameter* p : params) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(const ParameterList& params) {
  if (params.size() != m_.size()) throw std::logic_error("optimizer parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

void Adam::restore(long t, std::vector<Matrix> m, std::vector<Matrix> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace socnav::nn
