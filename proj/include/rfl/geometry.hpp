#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rfl {

// Image-plane coordinates are continuous; pixel (i, j) covers [i, i+1) x [j, j+1).
struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned box stored center-form. Corner form (x, y, w, h) is used at I/O boundaries.
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  static BBox from_corner(double x, double y, double w, double h) {
    return BBox{x + w / 2.0, y + h / 2.0, w, h};
  }
  double x() const { return cx - w / 2.0; }
  double y() const { return cy - h / 2.0; }
  double right() const { return cx + w / 2.0; }
  double bottom() const { return cy + h / 2.0; }
  Point center() const { return {cx, cy}; }
  double area() const { return w * h; }
  bool valid() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

// Throws InvalidBoxError unless w > 0 and h > 0 (and all fields finite).
void require_valid(const BBox& b, const char* what);

double iou(const BBox& a, const BBox& b);

double center_distance(const BBox& a, const BBox& b);

// Square crop window. out_size is the side of the resampled patch.
struct CropSpec {
  Point center;
  double side = 0.0;
  int out_size = 0;

  double scale() const { return side / out_size; }
};

// Rectangular crop window; stretched crops used by augmentation.
struct CropWindow {
  Point center;
  double width = 0.0;
  double height = 0.0;
  int out_size = 0;

  static CropWindow from(const CropSpec& s) { return {s.center, s.side, s.side, s.out_size}; }
  // Maps a point in patch pixel coordinates to image coordinates.
  Point to_image(Point patch) const;
  Point to_patch(Point image) const;
  // Box in patch coordinates for a box given in image coordinates.
  BBox box_to_patch(const BBox& image_box) const;
};

inline constexpr int kExemplarSize = 127;
inline constexpr int kSearchSize = 255;
inline constexpr double kExemplarContext = 2.0;
inline constexpr double kSearchContext = 4.0;

// Side of the square crop: context_factor * sqrt(w * h).
double crop_side(const BBox& target, double context_factor);

// out_size defaults to 127 for factor 2 and 255 for factor 4; other factors must pass it.
CropSpec crop_region(const BBox& target, double context_factor, int out_size = 0);

// Response-map cell; x is the column, y the row.
struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

// Layout of the response grid over a search patch.
struct GridSpec {
  int cells = 17;
  double stride = 8.0;
  int patch_size = kSearchSize;

  int center_index() const { return (cells - 1) / 2; }
  // Position of cell (0,0) in search-patch pixels.
  double origin() const { return patch_size / 2.0 - center_index() * stride; }
  Point cell_center(Cell c) const;
};

void validate(const GridSpec& g);

// Center of `cell` in the coordinates of `patch_center`, with one patch pixel equal to
// `patch_scale` output units (crop side / 255 for frame coordinates).
Point cell_to_image(Cell cell, const GridSpec& grid, Point patch_center, double patch_scale);

// Nearest cell to `p`, clamped to the grid.
Cell image_to_cell(Point p, const GridSpec& grid, Point patch_center, double patch_scale);

// "x,y,w,h" with comma, tab or space separators. Returns nullopt for absent annotations
// (NaN fields or non-positive size).
std::optional<BBox> parse_box_line(std::string_view line);
std::string format_box_line(const BBox& b);

std::vector<std::optional<BBox>> read_box_file(const std::string& path);
void write_box_file(const std::string& path, const std::vector<BBox>& boxes);

std::ostream& operator<<(std::ostream& os, const BBox& b);

}  // namespace rfl
