#include "rfl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "rfl/error.hpp"

namespace rfl {

bool BBox::valid() const {
  return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) && w > 0 &&
         h > 0;
}

void require_valid(const BBox& b, const char* what) {
  if (!b.valid()) {
    std::ostringstream os;
    os << what << ": invalid box " << b;
    throw InvalidBoxError(os.str());
  }
}

double iou(const BBox& a, const BBox& b) {
  require_valid(a, "iou");
  require_valid(b, "iou");
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x(), b.x()));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double center_distance(const BBox& a, const BBox& b) { return std::hypot(a.cx - b.cx, a.cy - b.cy); }

Point CropWindow::to_image(Point p) const {
  return {center.x + (p.x - out_size / 2.0) * (width / out_size),
          center.y + (p.y - out_size / 2.0) * (height / out_size)};
}

Point CropWindow::to_patch(Point p) const {
  return {(p.x - center.x) * (out_size / width) + out_size / 2.0,
          (p.y - center.y) * (out_size / height) + out_size / 2.0};
}

BBox CropWindow::box_to_patch(const BBox& b) const {
  const Point c = to_patch(b.center());
  return {c.x, c.y, b.w * out_size / width, b.h * out_size / height};
}

double crop_side(const BBox& target, double context_factor) {
  require_valid(target, "crop_side");
  if (!(context_factor > 0)) throw Error("crop_side: context factor must be positive");
  return context_factor * std::sqrt(target.w * target.h);
}

CropSpec crop_region(const BBox& target, double context_factor, int out_size) {
  const double side = crop_side(target, context_factor);
  if (out_size <= 0) {
    if (context_factor == kExemplarContext) {
      out_size = kExemplarSize;
    } else if (context_factor == kSearchContext) {
      out_size = kSearchSize;
    } else {
      throw Error("crop_region: out_size required for context factor " +
                  std::to_string(context_factor));
    }
  }
  return CropSpec{target.center(), side, out_size};
}

Point GridSpec::cell_center(Cell c) const {
  return {origin() + c.x * stride, origin() + c.y * stride};
}

void validate(const GridSpec& g) {
  if (g.cells <= 0 || g.cells % 2 == 0) throw Error("grid: cell count must be odd and positive");
  if (!(g.stride > 0)) throw Error("grid: stride must be positive");
  if ((g.cells - 1) * g.stride >= g.patch_size) throw Error("grid: span exceeds the search patch");
}

Point cell_to_image(Cell cell, const GridSpec& grid, Point patch_center, double patch_scale) {
  validate(grid);
  if (cell.x < 0 || cell.y < 0 || cell.x >= grid.cells || cell.y >= grid.cells) {
    throw Error("cell_to_image: cell (" + std::to_string(cell.x) + "," + std::to_string(cell.y) +
                ") outside the grid");
  }
  const int mid = grid.center_index();
  return {patch_center.x + (cell.x - mid) * grid.stride * patch_scale,
          patch_center.y + (cell.y - mid) * grid.stride * patch_scale};
}

Cell image_to_cell(Point p, const GridSpec& grid, Point patch_center, double patch_scale) {
  validate(grid);
  const int mid = grid.center_index();
  auto to_index = [&](double v, double c) {
    const int i = static_cast<int>(std::lround((v - c) / (grid.stride * patch_scale))) + mid;
    return std::clamp(i, 0, grid.cells - 1);
  };
  return {to_index(p.x, patch_center.x), to_index(p.y, patch_center.y)};
}

std::optional<BBox> parse_box_line(std::string_view line) {
  std::string s(line);
  for (char& ch : s) {
    if (ch == ',' || ch == '\t' || ch == ';') ch = ' ';
  }
  std::istringstream is(s);
  std::vector<double> v;
  std::string tok;
  while (is >> tok) {
    if (tok == "NaN" || tok == "nan" || tok == "NAN") {
      v.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw FormatError("bad number");
    } catch (const std::exception&) {
      throw FormatError("malformed box line: '" + std::string(line) + "'");
    }
  }
  if (v.size() != 4) throw FormatError("box line needs 4 values: '" + std::string(line) + "'");
  for (double x : v) {
    if (!std::isfinite(x)) return std::nullopt;
  }
  if (v[2] <= 0 || v[3] <= 0) return std::nullopt;
  return BBox::from_corner(v[0], v[1], v[2], v[3]);
}

std::string format_box_line(const BBox& b) {
  std::ostringstream os;
  os << std::setprecision(10) << b.x() << ',' << b.y() << ',' << b.w << ',' << b.h;
  return os.str();
}

std::vector<std::optional<BBox>> read_box_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open box file " + path);
  std::vector<std::optional<BBox>> boxes;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    boxes.push_back(parse_box_line(line));
  }
  return boxes;
}

void write_box_file(const std::string& path, const std::vector<BBox>& boxes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write box file " + path);
  for (const auto& b : boxes) out << format_box_line(b) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

std::ostream& operator<<(std::ostream& os, const BBox& b) {
  return os << "BBox(cx=" << b.cx << ", cy=" << b.cy << ", w=" << b.w << ", h=" << b.h << ")";
}

}  // namespace rfl
