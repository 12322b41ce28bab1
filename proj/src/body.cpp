#include "clothret/body.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "clothret/random.hpp"

namespace clothret {

namespace {

// Landmarks are the joints followed by bone tips that carry no joint.
enum Tip : int { HeadTop = kJointCount, RightHandTip, LeftHandTip, RightAnkle, LeftAnkle, TorsoBase, kLandmarkCount };

struct Landmark {
  int parent;
  Vec3 rest;
};

const std::array<Landmark, kLandmarkCount>& landmarks() {
  static const std::array<Landmark, kLandmarkCount> table = {{
      {-1, {0.0, 0.0, 0.0}},     // pelvis
      {0, {0.0, 0.18, 0.0}},     // spine
      {1, {0.0, 0.36, 0.0}},     // chest
      {2, {0.0, 0.56, 0.0}},     // neck
      {3, {0.0, 0.64, 0.0}},     // head
      {2, {0.19, 0.52, 0.0}},    // right shoulder
      {5, {0.47, 0.52, 0.0}},    // right elbow
      {6, {0.72, 0.52, 0.0}},    // right wrist
      {2, {-0.19, 0.52, 0.0}},   // left shoulder
      {8, {-0.47, 0.52, 0.0}},   // left elbow
      {9, {-0.72, 0.52, 0.0}},   // left wrist
      {0, {0.09, -0.06, 0.0}},   // right hip
      {11, {0.09, -0.48, 0.0}},  // right knee
      {0, {-0.09, -0.06, 0.0}},  // left hip
      {13, {-0.09, -0.48, 0.0}}, // left knee
      {4, {0.0, 0.84, 0.0}},     // head top
      {7, {0.80, 0.52, 0.0}},    // right hand tip
      {10, {-0.80, 0.52, 0.0}},  // left hand tip
      {12, {0.09, -0.98, 0.0}},  // right ankle
      {14, {-0.09, -0.98, 0.0}}, // left ankle
      {0, {0.0, -0.08, 0.0}},    // torso base
  }};
  return table;
}

// Landmark each joint's bone points to.
constexpr std::array<int, kJointCount> kBoneEnd = {
    1, 2, 3, 4, HeadTop, 6, 7, RightHandTip, 9, 10, LeftHandTip, 12, RightAnkle, 14, LeftAnkle};

struct Tube {
  int start;
  int end;
  double radius;
  int rings;
  int per_ring;
  Vec3 u;
  Vec3 w;
  std::vector<int> skin_bones;  // bones allowed to influence this tube
};

const std::vector<Tube>& tubes() {
  const Vec3 x = Vec3::UnitX(), y = Vec3::UnitY(), z = Vec3::UnitZ();
  static const std::vector<Tube> table = {
      {TorsoBase, 1, 0.14, 2, 10, x, z, {0, 1}},
      {1, 2, 0.15, 2, 10, x, z, {0, 1, 2}},
      {2, 3, 0.16, 2, 10, x, z, {1, 2}},
      {3, HeadTop, 0.09, 2, 10, x, z, {3, 4}},
      {5, 6, 0.05, 4, 5, y, z, {2, 5, 6}},
      {6, RightHandTip, 0.04, 4, 5, y, z, {5, 6, 7}},
      {8, 9, 0.05, 4, 5, y, z, {2, 8, 9}},
      {9, LeftHandTip, 0.04, 4, 5, y, z, {8, 9, 10}},
      {11, 12, 0.075, 4, 5, x, z, {0, 11, 12}},
      {12, RightAnkle, 0.055, 4, 5, x, z, {11, 12}},
      {13, 14, 0.075, 4, 5, x, z, {0, 13, 14}},
      {14, LeftAnkle, 0.055, 4, 5, x, z, {13, 14}},
  };
  return table;
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

std::array<Vec3, kLandmarkCount> shaped_landmarks(const BodyConfig& cfg) {
  const auto& table = landmarks();
  std::array<Vec3, kLandmarkCount> out;
  for (int l = 0; l < kLandmarkCount; ++l) {
    const int p = table[l].parent;
    out[l] = p < 0 ? table[l].rest : Vec3(out[p] + cfg.length_scale[p] * (table[l].rest - table[p].rest));
  }
  return out;
}

struct RingInfo {
  std::vector<int> bone;  // bone owning each vertex's ring (radius control)
  std::vector<int> tube;
  std::vector<double> fraction;
  std::vector<double> angle;
};

int nearest_bone(const Vec3& p, const std::array<Vec3, kLandmarkCount>& lm, const std::vector<int>& bones,
                 double* distance = nullptr, int exclude = -1) {
  int best = -1;
  double best_d = 0.0;
  for (int j : bones) {
    if (j == exclude) continue;
    const double d = segment_distance(p, lm[j], lm[kBoneEnd[j]]);
    if (best < 0 || d < best_d) {
      best = j;
      best_d = d;
    }
  }
  if (distance) *distance = best_d;
  return best;
}

const RingInfo& ring_info() {
  static const RingInfo info = [] {
    RingInfo r;
    const auto lm = shaped_landmarks(BodyConfig{});
    for (std::size_t t = 0; t < tubes().size(); ++t) {
      const Tube& tube = tubes()[t];
      for (int ring = 0; ring < tube.rings; ++ring) {
        const double f = (ring + 0.5) / tube.rings;
        const Vec3 center = lm[tube.start] + f * (lm[tube.end] - lm[tube.start]);
        const int bone = nearest_bone(center, lm, tube.skin_bones);
        for (int k = 0; k < tube.per_ring; ++k) {
          r.bone.push_back(bone);
          r.tube.push_back(static_cast<int>(t));
          r.fraction.push_back(f);
          r.angle.push_back(std::numbers::pi / 2 + 2.0 * std::numbers::pi * k / tube.per_ring);
        }
      }
    }
    return r;
  }();
  return info;
}

Points3 shaped_surface(const BodyConfig& cfg, const std::array<Vec3, kLandmarkCount>& lm) {
  const RingInfo& info = ring_info();
  Points3 v(kBodyVertexCount, 3);
  for (int i = 0; i < kBodyVertexCount; ++i) {
    const Tube& tube = tubes()[info.tube[i]];
    const Vec3 a = lm[tube.start];
    const Vec3 b = lm[tube.end];
    const double r = cfg.radius_scale[info.bone[i]] * tube.radius;
    const Vec3 p = a + info.fraction[i] * (b - a) +
                   r * (std::cos(info.angle[i]) * tube.u + std::sin(info.angle[i]) * tube.w);
    v.row(i) = p.transpose();
  }
  return v;
}

std::vector<Face> body_faces() {
  std::vector<Face> faces;
  int base = 0;
  for (const Tube& tube : tubes()) {
    for (int ring = 0; ring + 1 < tube.rings; ++ring) {
      for (int k = 0; k < tube.per_ring; ++k) {
        const int k1 = (k + 1) % tube.per_ring;
        const int a = base + ring * tube.per_ring + k;
        const int b = base + ring * tube.per_ring + k1;
        const int c = base + (ring + 1) * tube.per_ring + k;
        const int d = base + (ring + 1) * tube.per_ring + k1;
        faces.push_back({a, c, b});
        faces.push_back({b, c, d});
      }
    }
    base += tube.rings * tube.per_ring;
  }
  return faces;
}

const std::array<std::string_view, kJointCount> kNames = {
    "pelvis",    "spine",      "chest",      "neck",      "head",        "right_shoulder", "right_elbow", "right_wrist",
    "left_shoulder", "left_elbow", "left_wrist", "right_hip", "right_knee", "left_hip", "left_knee"};

std::array<JointLimits, kJointCount> build_limits() {
  std::array<JointLimits, kJointCount> t{};
  t[0] = {{-0.3, -0.5, -0.3}, {0.3, 0.5, 0.3}};
  t[1] = {{-0.3, -0.3, -0.4}, {0.3, 0.3, 0.2}};
  t[2] = {{-0.2, -0.3, -0.3}, {0.2, 0.3, 0.15}};
  t[3] = {{-0.3, -0.5, -0.4}, {0.3, 0.5, 0.3}};
  t[4] = {{-0.2, -0.4, -0.3}, {0.2, 0.4, 0.3}};
  // right arm: z lowers/raises the arm, y swings it forward, x twists
  t[5] = {{-1.4, -0.6, -0.8}, {0.6, 0.9, 0.8}};
  t[6] = {{-0.1, 0.0, -0.5}, {0.1, 2.6, 0.5}};
  t[7] = {{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
  // right leg: x raises the leg forward, z abducts
  t[11] = {{-0.2, -0.4, -0.4}, {0.6, 0.4, 1.2}};
  t[12] = {{-0.1, -0.2, -2.4}, {0.1, 0.2, 0.0}};
  for (int j : {5, 6, 7, 11, 12}) {
    const JointLimits& r = t[j];
    t[joint_mirror(j)] = {{-r.hi[0], -r.hi[1], r.lo[2]}, {-r.lo[0], -r.lo[1], r.hi[2]}};
  }
  return t;
}

}  // namespace

std::string_view joint_name(int joint) { return kNames.at(static_cast<std::size_t>(joint)); }

int joint_parent(int joint) { return landmarks().at(static_cast<std::size_t>(joint)).parent; }

int joint_mirror(int joint) {
  static constexpr std::array<int, kJointCount> table = {0, 1, 2, 3, 4, 8, 9, 10, 5, 6, 7, 13, 14, 11, 12};
  return table.at(static_cast<std::size_t>(joint));
}

const JointLimits& joint_limits(int joint) {
  static const auto table = build_limits();
  return table.at(static_cast<std::size_t>(joint));
}

void BodyConfig::validate() const {
  for (int j = 0; j < kJointCount; ++j) {
    const JointLimits& lim = joint_limits(j);
    for (int a = 0; a < 3; ++a) {
      const double v = joint_angles[j][a];
      if (!(v >= lim.lo[a] && v <= lim.hi[a])) {
        throw Error("joint " + std::string(joint_name(j)) + ": angle " + std::to_string(a) + " = " +
                    std::to_string(v) + " outside [" + std::to_string(lim.lo[a]) + ", " +
                    std::to_string(lim.hi[a]) + "]");
      }
    }
    for (double s : {length_scale[j], radius_scale[j]}) {
      if (!(s >= kShapeMin && s <= kShapeMax)) {
        throw Error("joint " + std::string(joint_name(j)) + ": shape multiplier " + std::to_string(s) +
                    " outside [0.7, 1.3]");
      }
    }
  }
}

std::array<double, BodyConfig::kFlatSize> BodyConfig::flatten() const {
  std::array<double, kFlatSize> out{};
  for (int j = 0; j < kJointCount; ++j) {
    for (int a = 0; a < 3; ++a) out[3 * j + a] = joint_angles[j][a];
    out[3 * kJointCount + j] = length_scale[j];
    out[4 * kJointCount + j] = radius_scale[j];
  }
  return out;
}

BodyConfig BodyConfig::unflatten(const std::array<double, kFlatSize>& flat) {
  BodyConfig cfg;
  for (int j = 0; j < kJointCount; ++j) {
    for (int a = 0; a < 3; ++a) cfg.joint_angles[j][a] = flat[3 * j + a];
    cfg.length_scale[j] = flat[3 * kJointCount + j];
    cfg.radius_scale[j] = flat[4 * kJointCount + j];
  }
  return cfg;
}

Mat3 euler_zyx(double a, double b, double c) {
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cc = std::cos(c), sc = std::sin(c);
  Mat3 rz, ry, rx;
  rz << ca, -sa, 0, sa, ca, 0, 0, 0, 1;
  ry << cb, 0, sb, 0, 1, 0, -sb, 0, cb;
  rx << 1, 0, 0, 0, cc, -sc, 0, sc, cc;
  return rz * ry * rx;
}

const Mesh& canonical_body() {
  static const Mesh mesh(shaped_surface(BodyConfig{}, shaped_landmarks(BodyConfig{})), body_faces());
  return mesh;
}

const Points3& canonical_joints() {
  static const Points3 joints = [] {
    const auto lm = shaped_landmarks(BodyConfig{});
    Points3 j(kJointCount, 3);
    for (int i = 0; i < kJointCount; ++i) j.row(i) = lm[i].transpose();
    return j;
  }();
  return joints;
}

const std::vector<SkinBinding>& skin_bindings() {
  static const std::vector<SkinBinding> bindings = [] {
    const auto lm = shaped_landmarks(BodyConfig{});
    const Points3& v = canonical_body().vertices();
    std::vector<SkinBinding> out(kBodyVertexCount);
    for (int i = 0; i < kBodyVertexCount; ++i) {
      const Vec3 p = v.row(i).transpose();
      double d1 = 0.0, d2 = 0.0;
      const auto& bones = tubes()[ring_info().tube[i]].skin_bones;
      const int b1 = nearest_bone(p, lm, bones, &d1);
      const int b2 = nearest_bone(p, lm, bones, &d2, b1);
      // Inverse-distance share of the second bone, remapped so vertices well
      // inside one bone's influence are bound rigidly to it.
      const double raw = d1 + d2 > 0.0 ? d1 / (d1 + d2) : 0.0;
      const double second = std::clamp(2.0 * (raw - 0.25), 0.0, 0.5);
      out[i].bone = {b1, b2};
      out[i].weight = {1.0 - second, second};
    }
    return out;
  }();
  return bindings;
}

const std::vector<int>& body_mirror_table() {
  static const std::vector<int> table = mirror_table(canonical_body().vertices());
  return table;
}

Skeleton pose_skeleton(const BodyConfig& cfg) {
  const auto lm = shaped_landmarks(cfg);
  Skeleton s;
  s.rest_joints.resize(kJointCount, 3);
  s.joints.resize(kJointCount, 3);
  for (int j = 0; j < kJointCount; ++j) {
    const auto& e = cfg.joint_angles[j];
    const Mat3 local = euler_zyx(e[0], e[1], e[2]);
    const int p = joint_parent(j);
    const Vec3 rest = lm[j];
    s.rest_joints.row(j) = rest.transpose();
    if (p < 0) {
      s.rotations[j] = local;
      s.joints.row(j) = rest.transpose();
    } else {
      s.rotations[j] = s.rotations[p] * local;
      const Vec3 parent_rest = lm[p];
      const Vec3 parent_shift = s.joints.row(p).transpose() - parent_rest;
      // Written as rest + correction so that the identity pose is exact.
      const Vec3 pos = rest + parent_shift + (s.rotations[p] - Mat3::Identity()) * (rest - parent_rest);
      s.joints.row(j) = pos.transpose();
    }
  }
  return s;
}

Mesh pose_body(const BodyConfig& cfg) {
  cfg.validate();
  const auto lm = shaped_landmarks(cfg);
  const Points3 rest = shaped_surface(cfg, lm);
  const Skeleton sk = pose_skeleton(cfg);
  const auto& bind = skin_bindings();
  Points3 out = rest;
  for (int i = 0; i < kBodyVertexCount; ++i) {
    const Vec3 v0 = rest.row(i).transpose();
    Vec3 delta = Vec3::Zero();
    for (int k = 0; k < 2; ++k) {
      const int b = bind[i].bone[k];
      const double w = bind[i].weight[k];
      if (w == 0.0) continue;
      const Vec3 j0 = sk.rest_joints.row(b).transpose();
      const Vec3 j1 = sk.joints.row(b).transpose();
      delta += w * ((sk.rotations[b] - Mat3::Identity()) * (v0 - j0) + (j1 - j0));
    }
    out.row(i) += delta.transpose();
  }
  return canonical_body().with_vertices(std::move(out));
}

BodyConfig mirror_config(const BodyConfig& cfg) {
  BodyConfig out;
  for (int j = 0; j < kJointCount; ++j) {
    const int m = joint_mirror(j);
    const auto& e = cfg.joint_angles[m];
    out.joint_angles[j] = {-e[0], -e[1], e[2]};
    out.length_scale[j] = cfg.length_scale[m];
    out.radius_scale[j] = cfg.radius_scale[m];
  }
  return out;
}

BodyConfig sample_pose(std::uint64_t seed, double shape_spread) {
  Rng rng(seed);
  BodyConfig cfg;
  for (int j = 0; j < kJointCount; ++j) {
    const JointLimits& lim = joint_limits(j);
    for (int a = 0; a < 3; ++a) cfg.joint_angles[j][a] = rng.uniform(lim.lo[a], lim.hi[a]);
  }
  for (int j = 0; j < kJointCount; ++j) {
    cfg.length_scale[j] = rng.uniform(1.0 - shape_spread, 1.0 + shape_spread);
    cfg.radius_scale[j] = rng.uniform(1.0 - shape_spread, 1.0 + shape_spread);
  }
  return cfg;
}

}  // namespace clothret
