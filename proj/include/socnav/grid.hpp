#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace socnav {

enum class GridCell : std::uint8_t { Empty = 0, Wall = 1, Goal = 2 };

enum class Heading : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

enum class Action : std::uint8_t { TurnLeft = 0, TurnRight = 1, Forward = 2 };

inline constexpr int kNumActions = 3;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::TurnLeft, Action::TurnRight,
                                                            Action::Forward};

std::string_view to_string(Action a);
std::string_view to_string(Heading h);

inline Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
inline Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Unit displacement for one step along `h` (row grows southward).
Cell heading_delta(Heading h);

inline Cell operator+(Cell a, Cell b) { return {a.row + b.row, a.col + b.col}; }

inline int manhattan(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }
inline int chebyshev(Cell a, Cell b) {
  return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col));
}

struct Pose {
  Cell cell;
  Heading heading = Heading::North;
  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Square occupancy map. Border cells are always Wall.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, GridCell fill = GridCell::Empty)
      : height_(height), width_(width), cells_(static_cast<std::size_t>(height * width), fill) {}

  int height() const { return height_; }
  int width() const { return width_; }

  bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < height_ && c.col < width_; }

  GridCell at(Cell c) const { return cells_[index(c)]; }
  void set(Cell c, GridCell v) { cells_[index(c)] = v; }

  bool is_wall(Cell c) const { return !in_bounds(c) || at(c) == GridCell::Wall; }

  const std::vector<GridCell>& cells() const { return cells_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(Cell c) const {
    if (!in_bounds(c)) throw std::out_of_range("grid cell out of bounds");
    return static_cast<std::size_t>(c.row * width_ + c.col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<GridCell> cells_;
};

struct WorldState {
  Grid grid;
  Pose agent;
  Pose poi;
  Cell goal;
  int step_count = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Per-cell observation channels, in one-hot order.
enum class Channel : std::uint8_t { Wall = 0, Empty = 1, Goal = 2, Poi = 3, OutOfView = 4 };
inline constexpr int kNumChannels = 5;

/// Egocentric window. The viewer sits at the bottom-center cell facing "up"
/// (row 0 is farthest ahead). Stored as one channel id per cell, which is
/// equivalent to a one-hot vector with exactly one active channel.
struct EgoObservation {
  int view_size = 0;
  std::vector<Channel> cells;
  /// Heading of the visible POI relative to the viewer (North = same facing,
  /// East = facing the viewer's right, ...). Empty when the POI is not in view.
  std::optional<Heading> poi_heading;

  EgoObservation() = default;
  explicit EgoObservation(int size)
      : view_size(size), cells(static_cast<std::size_t>(size * size), Channel::OutOfView) {}

  Channel at(int row, int col) const { return cells[static_cast<std::size_t>(row * view_size + col)]; }
  void set(int row, int col, Channel c) { cells[static_cast<std::size_t>(row * view_size + col)] = c; }

  /// Window position of the POI channel, if present.
  std::optional<Cell> poi_cell() const;

  bool poi_visible() const { return poi_cell().has_value(); }

  friend bool operator==(const EgoObservation&, const EgoObservation&) = default;
};

struct RewardConfig {
  double r_near = 0.1;
  double r_collision = -0.5;
  double r_goal = 10.0;
  int d_near = 3;  // Chebyshev
  int d_far = 6;   // Manhattan
  int max_steps = 100;
};

struct MapConfig {
  int size = 9;
  int view_size = 5;
  double wall_density = 0.15;
  double p_pause = 0.2;
  int min_goal_distance = 8;
  int max_start_distance = 3;
  int max_attempts = 500;
};

struct StepInfo {
  bool collision = false;
  bool poi_visible = false;
  int poi_distance = 0;  // Manhattan
};

struct StepOutcome {
  EgoObservation observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

}  // namespace socnav
