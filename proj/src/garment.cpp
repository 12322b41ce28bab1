#include "clothret/garment.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "clothret/body.hpp"

namespace clothret {

namespace {

constexpr int kTorsoRing = 20;
constexpr int kSleeveRing = 10;
constexpr double kCollarY = 0.51;
constexpr double kRingStep = 0.0285;
constexpr double kSlack = 0.035;

// Body ring heights and radii (see the tube table of the body proxy).
struct BodyRing {
  double y;
  double radius;
  int first_vertex;
};
constexpr BodyRing kWaistRing{0.225, 0.15, 20};
constexpr BodyRing kCollarRing{0.51, 0.16, 50};
constexpr int kRightUpperArmFirst = 80;
constexpr int kLeftUpperArmFirst = 120;

class Builder {
 public:
  int add(const Vec3& p) {
    verts_.push_back(p);
    return static_cast<int>(verts_.size()) - 1;
  }
  void connect_rings(int ring_a, int ring_b, int n) {
    for (int k = 0; k < n; ++k) {
      const int k1 = (k + 1) % n;
      faces_.push_back({ring_a + k, ring_b + k, ring_a + k1});
      faces_.push_back({ring_a + k1, ring_b + k, ring_b + k1});
    }
  }
  Mesh build() const {
    Points3 v(static_cast<Eigen::Index>(verts_.size()), 3);
    for (std::size_t i = 0; i < verts_.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = verts_[i].transpose();
    return Mesh(std::move(v), faces_);
  }

 private:
  std::vector<Vec3> verts_;
  std::vector<Face> faces_;
};

double torso_radius(double y, GarmentKind kind) {
  // body radius under the cloth, plus slack; the dress flares below the hips
  double body = y > 0.36 ? 0.16 : (y > 0.18 ? 0.15 : 0.14);
  double r = body + kSlack;
  if (kind == GarmentKind::Dress && y < -0.02) r = 0.19 + 0.06 * (-0.02 - y) / 0.45;
  return r;
}

void add_torso(Builder& b, GarmentKind kind, int rings) {
  const Points3& body = canonical_body().vertices();
  int prev = -1;
  for (int r = 0; r < rings; ++r) {
    const double y = kCollarY - kRingStep * r;
    const BodyRing* contact = nullptr;
    if (std::abs(y - kCollarRing.y) < 1e-9) contact = &kCollarRing;
    if (std::abs(y - kWaistRing.y) < 1e-9) contact = &kWaistRing;
    int first = -1;
    for (int k = 0; k < kTorsoRing; ++k) {
      int idx;
      if (contact != nullptr && k % 2 == 0) {
        idx = b.add(body.row(contact->first_vertex + k / 2).transpose());
      } else {
        const double th = std::numbers::pi / 2 + 2.0 * std::numbers::pi * k / kTorsoRing;
        const double rad = contact != nullptr ? contact->radius : torso_radius(y, kind);
        idx = b.add(Vec3(rad * std::cos(th), y, rad * std::sin(th)));
      }
      if (k == 0) first = idx;
    }
    if (prev >= 0) b.connect_rings(prev, first, kTorsoRing);
    prev = first;
  }
}

void add_sleeve(Builder& b, double side, int body_first) {
  const Points3& body = canonical_body().vertices();
  constexpr int rings = 10;
  constexpr double x0 = 0.225, step = 0.025, y0 = 0.52;
  int prev = -1;
  for (int r = 0; r < rings; ++r) {
    int first = -1;
    for (int k = 0; k < kSleeveRing; ++k) {
      int idx;
      if (r == 0 && k % 2 == 0) {
        idx = b.add(body.row(body_first + k / 2).transpose());
      } else {
        const double th = std::numbers::pi / 2 + 2.0 * std::numbers::pi * k / kSleeveRing;
        const double rad = r == 0 ? 0.05 : 0.05 + 0.03;
        idx = b.add(Vec3(side * (x0 + step * r), y0 + rad * std::cos(th), rad * std::sin(th)));
      }
      if (k == 0) first = idx;
    }
    if (prev >= 0) b.connect_rings(prev, first, kSleeveRing);
    prev = first;
  }
}

Garment make(GarmentKind kind) {
  Builder b;
  switch (kind) {
    case GarmentKind::TShirt:
      add_torso(b, kind, 20);
      add_sleeve(b, 1.0, kRightUpperArmFirst);
      add_sleeve(b, -1.0, kLeftUpperArmFirst);
      break;
    case GarmentKind::Sleeveless:
      add_torso(b, kind, 22);
      break;
    case GarmentKind::Dress:
      add_torso(b, kind, 35);
      break;
  }
  Garment g{kind, b.build(), {}};
  g.mirror = mirror_table(g.mesh.vertices());
  return g;
}

}  // namespace

std::string_view garment_name(GarmentKind kind) {
  switch (kind) {
    case GarmentKind::TShirt:
      return "tshirt";
    case GarmentKind::Sleeveless:
      return "sleeveless";
    case GarmentKind::Dress:
      return "dress";
  }
  return "unknown";
}

GarmentKind parse_garment(std::string_view name) {
  if (name == "tshirt") return GarmentKind::TShirt;
  if (name == "sleeveless") return GarmentKind::Sleeveless;
  if (name == "dress") return GarmentKind::Dress;
  throw Error("unknown garment '" + std::string(name) + "'");
}

const Garment& garment(GarmentKind kind) {
  static const std::map<GarmentKind, Garment> cache = {
      {GarmentKind::TShirt, make(GarmentKind::TShirt)},
      {GarmentKind::Sleeveless, make(GarmentKind::Sleeveless)},
      {GarmentKind::Dress, make(GarmentKind::Dress)},
  };
  return cache.at(kind);
}

}  // namespace clothret
