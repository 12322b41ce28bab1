#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clothret/body.hpp"
#include "clothret/mesh.hpp"

namespace clothret {

inline constexpr int kDefaultResolution = 256;
inline constexpr double kDepthEpsilon = 1e-4;
inline constexpr double kMaxScale = 10.0;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Weak-perspective camera: p = k * (first two rows of R) * v + t.
///
/// R is built from ZYX intrinsic Euler angles, t lives in the normalized
/// [0,1]^2 crop frame and k is the inverse depth.
struct Camera {
  std::array<double, 3> euler{};
  Vec2 t = Vec2::Zero();
  double k = 1.0;

  Mat3 rotation() const;
  /// Throws unless 0 < k <= kMaxScale and all values are finite.
  void validate() const;
  /// Same camera with angles wrapped to (-pi, pi].
  Camera wrapped() const;

  std::array<double, 6> to_array() const { return {euler[0], euler[1], euler[2], t.x(), t.y(), k}; }
  static Camera from_array(const std::array<double, 6>& a);
};

Vec2 project_point(const Vec3& v, const Camera& cam);
Points2 project(const Points3& vertices, const Camera& cam);
inline Points2 project(const Mesh& mesh, const Camera& cam) { return project(mesh.vertices(), cam); }

/// Partial derivatives of the rotation with respect to the three angles.
std::array<Mat3, 3> euler_zyx_derivatives(double a, double b, double c);

/// Reverse-mode helper for the projection. For an upstream gradient g on one
/// projected point, accumulates into the camera and vertex gradients.
class ProjectionAdjoint {
 public:
  explicit ProjectionAdjoint(const Camera& cam);

  /// Returns dL/dv; adds dL/d(euler, t, k) into camera_grad ordered like
  /// Camera::to_array().
  Vec3 accumulate(const Vec3& v, const Vec2& g, std::array<double, 6>& camera_grad) const;

 private:
  Camera cam_;
  Eigen::Matrix<double, 2, 3> top_;
  std::array<Eigen::Matrix<double, 2, 3>, 3> dtop_;
};

/// Depth and nearest-triangle buffer of a rasterized mesh.
struct Raster {
  int resolution = 0;
  std::vector<double> depth;
  std::vector<int> triangle;  // -1 where uncovered
  Points2 projected;
  Eigen::VectorXd vertex_depth;

  bool covered(int i, int j) const { return triangle[static_cast<std::size_t>(j * resolution + i)] >= 0; }
};

/// Rasterizes every face at pixel centers; depth is the third row of R v.
Raster rasterize(const Mesh& mesh, const Camera& cam, int resolution = kDefaultResolution);

struct Visibility {
  std::vector<std::uint8_t> visible;
  bool outside_crop = false;
};

/// Z-buffer visibility. A vertex is visible when it projects inside the crop
/// and no non-incident nearer triangle covering its position is more than
/// kDepthEpsilon in front of it.
Visibility zbuffer_visibility(const Mesh& mesh, const Camera& cam, int resolution = kDefaultResolution);
Visibility zbuffer_visibility(const Raster& raster, const Mesh& mesh);

/// Boundary points of a projected mesh in normalized crop coordinates.
struct Silhouette {
  Points2 points;
  int size() const { return static_cast<int>(points.rows()); }
};

/// Centers of covered pixels with at least one uncovered 4-neighbor.
/// Throws Error when nothing is covered.
Silhouette extract_silhouette(const Mesh& mesh, const Camera& cam, int resolution = kDefaultResolution);
Silhouette extract_silhouette(const Raster& raster);

/// A boundary pixel center written in barycentric coordinates of the
/// triangle covering it, so it can follow the projected vertices.
struct SilhouetteAnchor {
  Face corners;
  Vec3 weights;
  Vec2 center = Vec2::Zero();  // the pixel center itself
};
/// One anchor per point of extract_silhouette(raster), in the same order.
std::vector<SilhouetteAnchor> silhouette_anchors(const Raster& raster, const Mesh& mesh);

/// Projects the body and flags visibility; invisible points are zeroed.
BodyPointMap observe_body(const Mesh& body, const Camera& cam, int resolution = kDefaultResolution);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, top row first
};

struct RenderLayer {
  const Mesh* mesh;
  std::array<std::uint8_t, 3> color;
};

/// Flat-shaded rendering of the layers into a shared depth buffer. Image rows
/// run top to bottom, i.e. the crop's y axis points up in the picture.
RgbImage render_shaded(const std::vector<RenderLayer>& layers, const Camera& cam,
                       int resolution = kDefaultResolution);
/// Binary PPM: "P6\n<w> <h>\n255\n" followed by w*h RGB triplets.
void write_ppm(const RgbImage& image, const std::filesystem::path& path);
/// SVG of one or more point sets drawn as small circles over a square canvas.
std::string silhouette_svg(const std::vector<std::pair<const Silhouette*, std::string>>& sets, int size = 256);

}  // namespace clothret
