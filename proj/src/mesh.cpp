#include "clothret/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>


namespace clothret {

namespace {

std::string at_line(const std::vector<int>* lines, std::size_t face) {
  if (lines == nullptr) return "face " + std::to_string(face);
  return "line " + std::to_string((*lines)[face]);
}

// Checks indices and edge valence, then returns the symmetric adjacency.
std::vector<std::vector<int>> validate(int vertex_count, const std::vector<Face>& faces,
                                       const std::vector<int>* lines = nullptr) {
  std::map<std::pair<int, int>, int> edge_use;
  std::vector<std::vector<int>> adjacency(vertex_count);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    for (int k = 0; k < 3; ++k) {
      if (face[k] < 0 || face[k] >= vertex_count) {
        throw MeshError(at_line(lines, f) + ": face index " + std::to_string(face[k] + 1) +
                        " out of range (" + std::to_string(vertex_count) + " vertices)");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw MeshError(at_line(lines, f) + ": face repeats a vertex");
    }
    for (int k = 0; k < 3; ++k) {
      int a = face[k];
      int b = face[(k + 1) % 3];
      auto key = std::minmax(a, b);
      if (++edge_use[{key.first, key.second}] > 2) {
        throw MeshError(at_line(lines, f) + ": non-manifold edge (" + std::to_string(a + 1) + ", " +
                        std::to_string(b + 1) + ") shared by more than two faces");
      }
    }
  }
  for (const auto& [edge, count] : edge_use) {
    adjacency[edge.first].push_back(edge.second);
    adjacency[edge.second].push_back(edge.first);
  }
  for (auto& ring : adjacency) std::sort(ring.begin(), ring.end());
  return adjacency;
}

Mesh build_checked(Points3 vertices, std::vector<Face> faces, const std::vector<int>& lines);

}  // namespace

Mesh::Mesh(Points3 vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  if (!vertices_.allFinite()) throw MeshError("mesh has non-finite vertex coordinates");
  adjacency_ = validate(vertex_count(), faces_);
}

Mesh Mesh::with_vertices(Points3 vertices) const {
  if (vertices.rows() != vertices_.rows()) {
    throw MeshError("with_vertices: expected " + std::to_string(vertices_.rows()) +
                    " vertices, got " + std::to_string(vertices.rows()));
  }
  if (!vertices.allFinite()) throw MeshError("mesh has non-finite vertex coordinates");
  Mesh out;
  out.vertices_ = std::move(vertices);
  out.faces_ = faces_;
  out.adjacency_ = adjacency_;
  return out;
}

DeformationField::DeformationField(Points3 offsets) : offsets_(std::move(offsets)) {
  if (!offsets_.allFinite()) throw Error("deformation field has non-finite entries");
}

DeformationField DeformationField::zero(int vertex_count) {
  return DeformationField(Points3::Zero(vertex_count, 3));
}

Points3 DeformationField::apply(const Points3& rest) const {
  if (rest.rows() != offsets_.rows()) {
    throw Error("deformation field has " + std::to_string(offsets_.rows()) +
                " entries, template has " + std::to_string(rest.rows()) + " vertices");
  }
  return rest + offsets_;
}

namespace {

double parse_double(std::string_view token, int line) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw MeshError("line " + std::to_string(line) + ": cannot parse number '" +
                    std::string(token) + "'");
  }
  return value;
}

int parse_index(std::string_view token, int line) {
  token = token.substr(0, token.find('/'));
  int value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || value <= 0) {
    throw MeshError("line " + std::to_string(line) + ": bad face index '" + std::string(token) + "'");
  }
  return value - 1;
}

Mesh build_checked(Points3 vertices, std::vector<Face> faces, const std::vector<int>& lines) {
  validate(static_cast<int>(vertices.rows()), faces, &lines);
  return Mesh(std::move(vertices), std::move(faces));
}

}  // namespace

Mesh parse_obj(const std::string& text) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  std::vector<int> face_lines;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::istringstream fields(raw);
    std::string tag;
    if (!(fields >> tag) || tag[0] == '#') continue;
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(t);
    if (tag == "v") {
      if (tokens.size() < 3) throw MeshError("line " + std::to_string(line) + ": vertex needs 3 coordinates");
      verts.emplace_back(parse_double(tokens[0], line), parse_double(tokens[1], line),
                         parse_double(tokens[2], line));
    } else if (tag == "f") {
      if (tokens.size() != 3) {
        throw MeshError("line " + std::to_string(line) + ": only triangular faces are supported");
      }
      faces.push_back({parse_index(tokens[0], line), parse_index(tokens[1], line),
                       parse_index(tokens[2], line)});
      face_lines.push_back(line);
    }
  }
  if (verts.empty()) throw MeshError("OBJ contains no vertices");
  if (faces.empty()) throw MeshError("OBJ contains no faces");
  Points3 v(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  return build_checked(std::move(v), std::move(faces), face_lines);
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_obj(buf.str());
}

std::string format_obj(const Mesh& mesh) {
  std::string out;
  char line[128];
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    const auto& v = mesh.vertices();
    std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v(i, 0), v(i, 1), v(i, 2));
    out += line;
  }
  for (const Face& f : mesh.faces()) {
    std::snprintf(line, sizeof(line), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out += line;
  }
  return out;
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MeshError("cannot write " + path.string());
  out << format_obj(mesh);
}

SparseMatrix uniform_laplacian(const Mesh& mesh) {
  const int n = mesh.vertex_count();
  std::vector<Eigen::Triplet<double>> entries;
  for (int i = 0; i < n; ++i) {
    const auto& ring = mesh.neighbors(i);
    if (ring.empty()) throw MeshError("uniform_laplacian: vertex " + std::to_string(i) + " is isolated");
    const double w = 1.0 / static_cast<double>(ring.size());
    // Diagonal is the rounded sum of the off-diagonal weights, so the row
    // sums to zero exactly rather than within an ulp.
    double diag = 0.0;
    for (int j : ring) {
      entries.emplace_back(i, j, -w);
      diag += w;
    }
    entries.emplace_back(i, i, diag);
  }
  SparseMatrix lap(n, n);
  lap.setFromTriplets(entries.begin(), entries.end());
  return lap;
}

RotationFit rotation_from_covariance(const Mat3& covariance) {
  RotationFit fit;
  if (!(covariance.cwiseAbs().maxCoeff() > 1e-300)) {
    fit.degenerate = true;
    return fit;
  }
  // Fast path: right singular vectors from the closed-form eigensolver of
  // H^T H, left ones from H v. Both bases are completed by cross products,
  // which applies the reflection correction on the smallest singular value.
  Eigen::SelfAdjointEigenSolver<Mat3> eig;
  eig.computeDirect(covariance.transpose() * covariance);
  const Vec3 lambda = eig.eigenvalues();  // ascending
  if (lambda(1) > 1e-12 * lambda(2)) {
    const Vec3 v0 = eig.eigenvectors().col(2);
    const Vec3 v1 = eig.eigenvectors().col(1);
    Vec3 u0 = covariance * v0;
    Vec3 u1 = covariance * v1;
    u0.normalize();
    u1 -= u0.dot(u1) * u0;
    const double n1 = u1.norm();
    if (n1 > 1e-6 * std::sqrt(lambda(2))) {
      u1 /= n1;
      Mat3 u, v;
      u << u0, u1, u0.cross(u1);
      v << v0, v1, v0.cross(v1);
      fit.rotation = v * u.transpose();
      return fit;
    }
  }
  Eigen::JacobiSVD<Mat3> svd(covariance, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((v * u.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  fit.rotation = v * u.transpose();
  return fit;
}

RotationFit best_fit_rotation(std::span<const Vec3> p, std::span<const Vec3> q,
                              std::span<const double> weights) {
  if (p.size() != q.size() || p.size() != weights.size() || p.empty()) {
    throw Error("best_fit_rotation: need equally sized, non-empty inputs");
  }
  Mat3 cov = Mat3::Zero();
  for (std::size_t k = 0; k < p.size(); ++k) cov += weights[k] * p[k] * q[k].transpose();
  return rotation_from_covariance(cov);
}

std::vector<int> mirror_table(const Points3& points, double tolerance) {
  const Eigen::Index n = points.rows();
  std::vector<int> table(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVector3d m = points.row(i);
    m.x() = -m.x();
    Eigen::Index best = 0;
    double best_d = (points.rowwise() - m).rowwise().squaredNorm().minCoeff(&best);
    if (std::sqrt(best_d) > tolerance) {
      throw MeshError("mirror_table: vertex " + std::to_string(i) + " has no mirror partner");
    }
    table[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return table;
}

}  // namespace clothret
