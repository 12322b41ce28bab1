#pragma once

#include <string_view>
#include <vector>

#include "clothret/mesh.hpp"

namespace clothret {

enum class GarmentKind : int { TShirt = 0, Sleeveless = 1, Dress = 2 };

std::string_view garment_name(GarmentKind kind);
/// Accepts "tshirt", "sleeveless", "dress"; throws Error otherwise.
GarmentKind parse_garment(std::string_view name);

/// Procedural cloth template aligned with canonical_body(). Contact rings
/// share vertex positions with body rings; everything else is offset
/// outwards by a few centimeters.
struct Garment {
  GarmentKind kind;
  Mesh mesh;
  std::vector<int> mirror;  // x -> -x partner of every vertex
};

const Garment& garment(GarmentKind kind);

}  // namespace clothret
