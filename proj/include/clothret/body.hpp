#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "clothret/mesh.hpp"

namespace clothret {

/// Skeleton of the body proxy. Every joint drives one bone.
enum class Joint : int {
  Pelvis,
  Spine,
  Chest,
  Neck,
  Head,
  RightShoulder,
  RightElbow,
  RightWrist,
  LeftShoulder,
  LeftElbow,
  LeftWrist,
  RightHip,
  RightKnee,
  LeftHip,
  LeftKnee,
};

inline constexpr int kJointCount = 15;
inline constexpr int kBodyVertexCount = 240;

std::string_view joint_name(int joint);
/// Parent joint index, -1 for the pelvis.
int joint_parent(int joint);
/// Joint on the other side of the body (itself for the spine chain).
int joint_mirror(int joint);

/// Inclusive Euler limits (radians) per joint, ordered like the angles (z, y, x).
struct JointLimits {
  std::array<double, 3> lo;
  std::array<double, 3> hi;
};
const JointLimits& joint_limits(int joint);

inline constexpr double kShapeMin = 0.7;
inline constexpr double kShapeMax = 1.3;

/// Pose and shape controls of the body proxy.
///
/// Angles are ZYX intrinsic Euler angles of each joint relative to its
/// parent; shape multipliers scale bone lengths and limb radii.
struct BodyConfig {
  std::array<std::array<double, 3>, kJointCount> joint_angles{};
  std::array<double, kJointCount> length_scale;
  std::array<double, kJointCount> radius_scale;

  BodyConfig() {
    length_scale.fill(1.0);
    radius_scale.fill(1.0);
  }

  /// Throws Error naming the first joint outside its limits.
  void validate() const;

  static constexpr int kFlatSize = kJointCount * 5;
  std::array<double, kFlatSize> flatten() const;
  static BodyConfig unflatten(const std::array<double, kFlatSize>& flat);

  bool operator==(const BodyConfig&) const = default;
};

/// Ordered 2D projections of the body vertices with visibility flags.
/// Index i always refers to body vertex vertex_ids[i].
struct BodyPointMap {
  Points2 points;
  std::vector<std::uint8_t> visible;
  std::vector<int> vertex_ids;

  int size() const { return static_cast<int>(points.rows()); }
};

/// Skinning weights of one body vertex: two bones, weights summing to one.
struct SkinBinding {
  std::array<int, 2> bone{};
  std::array<double, 2> weight{};
};

/// Deterministic T-pose body (pelvis at the origin, y up, facing -z).
const Mesh& canonical_body();
const std::vector<SkinBinding>& skin_bindings();
/// Rest joint positions of the canonical body.
const Points3& canonical_joints();
/// Mirror partner of every body vertex under x -> -x.
const std::vector<int>& body_mirror_table();

/// Joint positions and global rotations for a configuration.
struct Skeleton {
  Points3 rest_joints;
  Points3 joints;
  std::array<Mat3, kJointCount> rotations;
};
Skeleton pose_skeleton(const BodyConfig& cfg);

/// Linear-blend skinned surface. The identity configuration reproduces
/// canonical_body() bit for bit.
Mesh pose_body(const BodyConfig& cfg);

/// Configuration of the body reflected through x = 0: left and right joints
/// swap and the z and y angles change sign. Posing it gives the mirror image.
BodyConfig mirror_config(const BodyConfig& cfg);

/// Pose drawn uniformly inside the joint limits; shape multipliers uniform in
/// [1 - shape_spread, 1 + shape_spread].
BodyConfig sample_pose(std::uint64_t seed, double shape_spread = 0.1);

/// Rotation for ZYX intrinsic Euler angles (a about z, b about y, c about x).
Mat3 euler_zyx(double a, double b, double c);

}  // namespace clothret
