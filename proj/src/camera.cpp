#include "clothret/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace clothret {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  if (w > std::numbers::pi) w -= two_pi;
  return w;
}

Mat3 Camera::rotation() const { return euler_zyx(euler[0], euler[1], euler[2]); }

void Camera::validate() const {
  for (double e : euler) {
    if (!std::isfinite(e)) throw Error("camera: non-finite angle");
  }
  if (!t.allFinite()) throw Error("camera: non-finite translation");
  if (!(k > 0.0 && k <= kMaxScale)) throw Error("camera: scale " + std::to_string(k) + " outside (0, 10]");
}

Camera Camera::wrapped() const {
  Camera c = *this;
  for (double& e : c.euler) e = wrap_angle(e);
  return c;
}

Camera Camera::from_array(const std::array<double, 6>& a) {
  Camera c;
  c.euler = {a[0], a[1], a[2]};
  c.t = Vec2(a[3], a[4]);
  c.k = a[5];
  return c;
}

Vec2 project_point(const Vec3& v, const Camera& cam) {
  return cam.k * (cam.rotation().topRows<2>() * v) + cam.t;
}

Points2 project(const Points3& vertices, const Camera& cam) {
  const Eigen::Matrix<double, 2, 3> top = cam.k * cam.rotation().topRows<2>();
  Points2 out(vertices.rows(), 2);
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    out.row(i) = (top * vertices.row(i).transpose() + cam.t).transpose();
  }
  return out;
}

std::array<Mat3, 3> euler_zyx_derivatives(double a, double b, double c) {
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cc = std::cos(c), sc = std::sin(c);
  Mat3 rz, ry, rx, drz, dry, drx;
  rz << ca, -sa, 0, sa, ca, 0, 0, 0, 1;
  ry << cb, 0, sb, 0, 1, 0, -sb, 0, cb;
  rx << 1, 0, 0, 0, cc, -sc, 0, sc, cc;
  drz << -sa, -ca, 0, ca, -sa, 0, 0, 0, 0;
  dry << -sb, 0, cb, 0, 0, 0, -cb, 0, -sb;
  drx << 0, 0, 0, 0, -sc, -cc, 0, cc, -sc;
  return {drz * ry * rx, rz * dry * rx, rz * ry * drx};
}

ProjectionAdjoint::ProjectionAdjoint(const Camera& cam) : cam_(cam) {
  top_ = cam.rotation().topRows<2>();
  const auto d = euler_zyx_derivatives(cam.euler[0], cam.euler[1], cam.euler[2]);
  for (int i = 0; i < 3; ++i) dtop_[i] = d[i].topRows<2>();
}

Vec3 ProjectionAdjoint::accumulate(const Vec3& v, const Vec2& g, std::array<double, 6>& camera_grad) const {
  for (int i = 0; i < 3; ++i) camera_grad[i] += cam_.k * g.dot(dtop_[i] * v);
  camera_grad[3] += g.x();
  camera_grad[4] += g.y();
  camera_grad[5] += g.dot(top_ * v);
  return cam_.k * (top_.transpose() * g);
}

Raster rasterize(const Mesh& mesh, const Camera& cam, int resolution) {
  if (resolution < 16) throw Error("rasterize: resolution must be at least 16");
  if (mesh.face_count() == 0) throw Error("rasterize: mesh has no faces");
  Raster r;
  r.resolution = resolution;
  const std::size_t npix = static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution);
  r.depth.assign(npix, std::numeric_limits<double>::infinity());
  r.triangle.assign(npix, -1);
  r.projected = project(mesh, cam);
  const Eigen::RowVector3d depth_row = cam.rotation().row(2);
  r.vertex_depth = mesh.vertices() * depth_row.transpose();

  const double res = resolution;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Face& face = mesh.faces()[static_cast<std::size_t>(f)];
    const Vec2 a = r.projected.row(face[0]).transpose() * res;
    const Vec2 b = r.projected.row(face[1]).transpose() * res;
    const Vec2 c = r.projected.row(face[2]).transpose() * res;
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area) < 1e-12) continue;
    const double za = r.vertex_depth(face[0]), zb = r.vertex_depth(face[1]), zc = r.vertex_depth(face[2]);
    const int i0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
    const int i1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}) - 0.5)));
    const int j0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
    const int j1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}) - 0.5)));
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        const Vec2 p(i + 0.5, j + 0.5);
        const double w0 = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
        const double w1 = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
        const double w2 = 1.0 - w0 - w1;
        constexpr double tol = -1e-12;
        if (w0 < tol || w1 < tol || w2 < tol) continue;
        const double z = w0 * za + w1 * zb + w2 * zc;
        const std::size_t idx = static_cast<std::size_t>(j * resolution + i);
        if (z < r.depth[idx]) {
          r.depth[idx] = z;
          r.triangle[idx] = f;
        }
      }
    }
  }
  return r;
}

namespace {

// Barycentric coordinates of p in the projected triangle; false when degenerate.
bool barycentric(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p, Vec3& w) {
  const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  if (std::abs(area) < 1e-18) return false;
  w.x() = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
  w.y() = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
  w.z() = 1.0 - w.x() - w.y();
  return true;
}

}  // namespace

Visibility zbuffer_visibility(const Raster& raster, const Mesh& mesh) {
  const int res = raster.resolution;
  Visibility vis;
  vis.visible.assign(static_cast<std::size_t>(mesh.vertex_count()), 0);
  bool any_inside = false;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const Vec2 p = raster.projected.row(v).transpose();
    const double px = p.x() * res, py = p.y() * res;
    if (!(px >= 0.0 && px < res && py >= 0.0 && py < res)) continue;
    any_inside = true;
    const int i = static_cast<int>(px), j = static_cast<int>(py);
    std::set<int> candidates;
    for (int dj = -1; dj <= 1; ++dj) {
      for (int di = -1; di <= 1; ++di) {
        const int ii = i + di, jj = j + dj;
        if (ii < 0 || jj < 0 || ii >= res || jj >= res) continue;
        const int t = raster.triangle[static_cast<std::size_t>(jj * res + ii)];
        if (t >= 0) candidates.insert(t);
      }
    }
    bool visible = true;
    const double depth = raster.vertex_depth(v);
    for (int t : candidates) {
      const Face& f = mesh.faces()[static_cast<std::size_t>(t)];
      if (f[0] == v || f[1] == v || f[2] == v) continue;
      Vec3 w;
      if (!barycentric(raster.projected.row(f[0]).transpose(), raster.projected.row(f[1]).transpose(),
                       raster.projected.row(f[2]).transpose(), p, w)) {
        continue;
      }
      if (w.minCoeff() < -1e-9) continue;
      const double plane = w.x() * raster.vertex_depth(f[0]) + w.y() * raster.vertex_depth(f[1]) +
                           w.z() * raster.vertex_depth(f[2]);
      if (depth > plane + kDepthEpsilon) {
        visible = false;
        break;
      }
    }
    vis.visible[static_cast<std::size_t>(v)] = visible ? 1 : 0;
  }
  vis.outside_crop = !any_inside;
  return vis;
}

Visibility zbuffer_visibility(const Mesh& mesh, const Camera& cam, int resolution) {
  return zbuffer_visibility(rasterize(mesh, cam, resolution), mesh);
}

namespace {

bool is_boundary(const Raster& r, int i, int j) {
  if (!r.covered(i, j)) return false;
  const int res = r.resolution;
  constexpr int di[4] = {1, -1, 0, 0};
  constexpr int dj[4] = {0, 0, 1, -1};
  for (int k = 0; k < 4; ++k) {
    const int ii = i + di[k], jj = j + dj[k];
    if (ii < 0 || jj < 0 || ii >= res || jj >= res || !r.covered(ii, jj)) return true;
  }
  return false;
}

}  // namespace

Silhouette extract_silhouette(const Raster& raster) {
  const int res = raster.resolution;
  std::vector<Vec2> pts;
  for (int j = 0; j < res; ++j) {
    for (int i = 0; i < res; ++i) {
      if (is_boundary(raster, i, j)) pts.emplace_back((i + 0.5) / res, (j + 0.5) / res);
    }
  }
  if (pts.empty()) throw Error("extract_silhouette: coverage mask is empty");
  Silhouette s;
  s.points.resize(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t k = 0; k < pts.size(); ++k) s.points.row(static_cast<Eigen::Index>(k)) = pts[k].transpose();
  return s;
}

Silhouette extract_silhouette(const Mesh& mesh, const Camera& cam, int resolution) {
  return extract_silhouette(rasterize(mesh, cam, resolution));
}

std::vector<SilhouetteAnchor> silhouette_anchors(const Raster& raster, const Mesh& mesh) {
  const int res = raster.resolution;
  std::vector<SilhouetteAnchor> anchors;
  for (int j = 0; j < res; ++j) {
    for (int i = 0; i < res; ++i) {
      if (!is_boundary(raster, i, j)) continue;
      const Face& f = mesh.faces()[static_cast<std::size_t>(raster.triangle[static_cast<std::size_t>(j * res + i)])];
      const Vec2 center((i + 0.5) / res, (j + 0.5) / res);
      SilhouetteAnchor a{f, Vec3::Zero(), center};
      barycentric(raster.projected.row(f[0]).transpose(), raster.projected.row(f[1]).transpose(),
                  raster.projected.row(f[2]).transpose(), center, a.weights);
      anchors.push_back(a);
    }
  }
  return anchors;
}

BodyPointMap observe_body(const Mesh& body, const Camera& cam, int resolution) {
  const Raster raster = rasterize(body, cam, resolution);
  const Visibility vis = zbuffer_visibility(raster, body);
  BodyPointMap map;
  map.points = raster.projected;
  map.visible = vis.visible;
  map.vertex_ids.resize(static_cast<std::size_t>(body.vertex_count()));
  for (int i = 0; i < body.vertex_count(); ++i) {
    map.vertex_ids[static_cast<std::size_t>(i)] = i;
    if (!map.visible[static_cast<std::size_t>(i)]) map.points.row(i).setZero();
  }
  return map;
}

RgbImage render_shaded(const std::vector<RenderLayer>& layers, const Camera& cam, int resolution) {
  RgbImage img;
  img.width = img.height = resolution;
  img.rgb.assign(static_cast<std::size_t>(resolution * resolution * 3), 255);
  std::vector<double> zbuf(static_cast<std::size_t>(resolution * resolution), std::numeric_limits<double>::infinity());
  const Mat3 rot = cam.rotation();
  for (const RenderLayer& layer : layers) {
    const Raster r = rasterize(*layer.mesh, cam, resolution);
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) {
        const std::size_t idx = static_cast<std::size_t>(j * resolution + i);
        const int t = r.triangle[idx];
        if (t < 0 || r.depth[idx] >= zbuf[idx]) continue;
        zbuf[idx] = r.depth[idx];
        const Face& f = layer.mesh->faces()[static_cast<std::size_t>(t)];
        const Vec3 a = rot * layer.mesh->vertex(f[0]);
        const Vec3 n = (rot * layer.mesh->vertex(f[1]) - a).cross(rot * layer.mesh->vertex(f[2]) - a).normalized();
        const double shade = 0.35 + 0.65 * std::abs(n.z());
        const std::size_t out = static_cast<std::size_t>(((resolution - 1 - j) * resolution + i) * 3);
        for (int ch = 0; ch < 3; ++ch) {
          img.rgb[out + static_cast<std::size_t>(ch)] =
              static_cast<std::uint8_t>(std::lround(shade * layer.color[static_cast<std::size_t>(ch)]));
        }
      }
    }
  }
  return img;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
}

std::string silhouette_svg(const std::vector<std::pair<const Silhouette*, std::string>>& sets, int size) {
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& [sil, color] : sets) {
    svg << "<g fill=\"" << color << "\">\n";
    for (int k = 0; k < sil->size(); ++k) {
      svg << "<circle cx=\"" << sil->points(k, 0) * size << "\" cy=\"" << (1.0 - sil->points(k, 1)) * size
          << "\" r=\"0.8\"/>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace clothret
