#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace clothret {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Face = std::array<int, 3>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MeshError : public Error {
 public:
  using Error::Error;
};

/// Triangle mesh with per-vertex one-ring neighborhoods.
///
/// Construction validates face indices and edge manifoldness; a Mesh is
/// immutable afterwards, so it can be shared freely between threads.
class Mesh {
 public:
  Mesh() = default;
  Mesh(Points3 vertices, std::vector<Face> faces);

  const Points3& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<std::vector<int>>& adjacency() const { return adjacency_; }
  const std::vector<int>& neighbors(int v) const { return adjacency_[v]; }

  int vertex_count() const { return static_cast<int>(vertices_.rows()); }
  int face_count() const { return static_cast<int>(faces_.size()); }
  Vec3 vertex(int i) const { return vertices_.row(i).transpose(); }

  /// Same topology, new positions.
  Mesh with_vertices(Points3 vertices) const;

 private:
  Points3 vertices_;
  std::vector<Face> faces_;
  std::vector<std::vector<int>> adjacency_;
};

/// Per-vertex displacement of a cloth template (meters).
class DeformationField {
 public:
  DeformationField() = default;
  explicit DeformationField(Points3 offsets);
  static DeformationField zero(int vertex_count);

  const Points3& offsets() const { return offsets_; }
  int size() const { return static_cast<int>(offsets_.rows()); }

  /// Deformed positions template + offsets; sizes must agree.
  Points3 apply(const Points3& rest) const;

 private:
  Points3 offsets_;
};

Mesh load_obj(const std::filesystem::path& path);
Mesh parse_obj(const std::string& text);
void save_obj(const Mesh& mesh, const std::filesystem::path& path);
std::string format_obj(const Mesh& mesh);

/// Uniform Laplacian: (L v)_i = v_i - mean of the one-ring of i.
/// Throws MeshError naming the first isolated vertex.
SparseMatrix uniform_laplacian(const Mesh& mesh);

struct RotationFit {
  Mat3 rotation = Mat3::Identity();
  bool degenerate = false;
};

/// Rotation R minimizing sum_k w_k |q_k - R p_k|^2 with det(R) = +1.
RotationFit best_fit_rotation(std::span<const Vec3> p, std::span<const Vec3> q,
                              std::span<const double> weights);
/// Weighted cross-covariance form: H = sum_k w_k p_k q_k^T.
RotationFit rotation_from_covariance(const Mat3& covariance);

/// Index of each vertex's mirror image under x -> -x. Throws when the point
/// set is not mirror symmetric within `tolerance`.
std::vector<int> mirror_table(const Points3& points, double tolerance = 1e-9);

}  // namespace clothret
