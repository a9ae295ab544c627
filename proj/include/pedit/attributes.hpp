#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pedit/error.hpp"
#include "pedit/image.hpp"

namespace pedit {

struct NamedColor {
  std::string name;
  Rgb rgb;
  friend bool operator==(const NamedColor&, const NamedColor&) = default;
};

/// Fixed list of clothing colours an attribute token may draw from.
class ColorPalette {
 public:
  ColorPalette() = default;
  explicit ColorPalette(std::vector<NamedColor> colors) : colors_(std::move(colors)) {}

  static const ColorPalette& standard() {
    static const ColorPalette palette({
        {"white", {240, 240, 240}},
        {"black", {20, 20, 20}},
        {"gray", {128, 128, 128}},
        {"red", {200, 30, 30}},
        {"green", {30, 150, 50}},
        {"blue", {30, 60, 200}},
        {"yellow", {230, 210, 40}},
        {"orange", {240, 130, 20}},
        {"purple", {130, 40, 160}},
        {"brown", {110, 70, 35}},
        {"pink", {240, 150, 190}},
    });
    return palette;
  }

  const std::vector<NamedColor>& colors() const noexcept { return colors_; }

  const NamedColor& find(std::string_view name) const {
    for (const auto& c : colors_) {
      if (c.name == name) return c;
    }
    throw ValidationError("colour '" + std::string(name) + "' is not in the palette");
  }

 private:
  std::vector<NamedColor> colors_;
};

/// Structured replacement for the text prompt: the template is fixed and only
/// the two colour slots vary.
struct AttributeToken {
  NamedColor top;
  NamedColor pants;

  static AttributeToken from_names(std::string_view top, std::string_view pants,
                                   const ColorPalette& palette = ColorPalette::standard()) {
    return {palette.find(top), palette.find(pants)};
  }

  std::string prompt() const {
    return "a pedestrian wearing a " + top.name + " top and " + pants.name + " pants";
  }

  friend bool operator==(const AttributeToken&, const AttributeToken&) = default;
};

}  // namespace pedit
