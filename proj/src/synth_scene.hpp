#pragma once

#include <array>
#include <vector>

#include "rfl/data.hpp"

namespace rfl {

// Textured rectangle or ellipse; texture coordinates are relative to the shape's box so the
// pattern scales with it.
struct ShapeAppearance {
  enum class Kind { Rectangle, Ellipse };
  enum class Texture { Border, HorizontalStripes, VerticalStripes, Diagonal, Checker };
  Kind kind = Kind::Rectangle;
  Texture texture = Texture::Border;
  std::array<float, 3> primary{};
  std::array<float, 3> secondary{};
  double period = 0.5;
};

void draw_shape(Image& image, const BBox& box, const ShapeAppearance& look, float brightness);

// Frame descriptor for a synthetic sequence: static background (with clutter) and the per-frame
// target state. Frames are rendered on demand.
class SynthScene {
 public:
  SynthConfig cfg;
  Image background;
  ShapeAppearance target;
  std::vector<BBox> boxes;
  std::vector<float> brightness;
  std::vector<float> hue;  // target hue offset per frame, turns

  Image render(std::size_t index) const;
};

}  // namespace rfl
