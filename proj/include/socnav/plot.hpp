#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace socnav::plot {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// RGB raster with a few drawing primitives and a built-in 5×7 font.
class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }

  void set(int x, int y, Rgb c);
  /// Blend `c` over the pixel with opacity `alpha`.
  void blend(int x, int y, Rgb c, double alpha);
  void line(double x0, double y0, double x1, double y1, Rgb c, int thickness = 1);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  /// Upper-case letters, digits and a little punctuation; scale ≥ 1.
  void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  static int text_width(const std::string& s, int scale = 1);

  void save_png(const std::string& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> pixels_;
};

struct Series {
  std::string label;
  std::vector<double> y;
  std::vector<double> low;   // optional band
  std::vector<double> high;  // optional band
  Rgb color;
};

/// Line chart over x = 0..n-1 with optional shaded bands and a legend.
void line_chart(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                const std::string& ylabel, const std::string& path, int width = 900, int height = 560);

}  // namespace socnav::plot
