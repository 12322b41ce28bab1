#include <map>
#include <random>

#include <doctest.h>

#include "clothret/body.hpp"
#include "clothret/mesh.hpp"
#include "support.hpp"

using namespace clothret;

namespace {

Mat3 random_rotation(std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(gen), n(gen), n(gen), n(gen));
  return q.normalized().toRotationMatrix();
}

double residual(const std::vector<Vec3>& p, const std::vector<Vec3>& q, const Mat3& r) {
  double e = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) e += (q[k] - r * p[k]).squaredNorm();
  return e;
}

RotationFit fit(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
  const std::vector<double> w(p.size(), 1.0);
  return best_fit_rotation(p, q, w);
}

}  // namespace

TEST_CASE("single triangle OBJ") {
  const Mesh m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  CHECK(m.vertex_count() == 3);
  CHECK(m.face_count() == 1);
  for (int i = 0; i < 3; ++i) CHECK(m.neighbors(i).size() == 2);
}

TEST_CASE("cube OBJ is a closed manifold") {
  const Mesh m = parse_obj(testing::kCubeObj);
  CHECK(m.vertex_count() == 8);
  CHECK(m.face_count() == 12);
  std::map<std::pair<int, int>, int> uses;
  for (const Face& f : m.faces()) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      ++uses[{std::min(a, b), std::max(a, b)}];
    }
  }
  CHECK(uses.size() == 18);
  for (const auto& [edge, count] : uses) CHECK(count == 2);
}

TEST_CASE("OBJ errors carry line numbers") {
  SUBCASE("out-of-range face index") {
    try {
      parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
      FAIL("expected an error");
    } catch (const MeshError& e) {
      CHECK(testing::message_contains(e, "line 4"));
      CHECK(testing::message_contains(e, "9"));
    }
  }
  SUBCASE("unparsable coordinate") {
    try {
      parse_obj("v 0 0 0\nv 1 x 0\nv 0 1 0\nf 1 2 3\n");
      FAIL("expected an error");
    } catch (const MeshError& e) {
      CHECK(testing::message_contains(e, "line 2"));
    }
  }
  SUBCASE("non-manifold edge") {
    try {
      parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\nf 1 2 3\nf 2 1 4\nf 1 2 5\n");
      FAIL("expected an error");
    } catch (const MeshError& e) {
      CHECK(testing::message_contains(e, "line 8"));
      CHECK(testing::message_contains(e, "non-manifold"));
    }
  }
  SUBCASE("quads are rejected") {
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"), MeshError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_obj("/nonexistent/mesh.obj"), MeshError); }
}

TEST_CASE("Laplacian of a flat grid interior vertex vanishes") {
  const Mesh m = testing::grid_mesh(5);
  const SparseMatrix lap = uniform_laplacian(m);
  const Points3 lv = lap * m.vertices();
  CHECK(lv.row(2 * 5 + 2).norm() < 1e-15);
  CHECK(lv.row(1 * 5 + 1).norm() < 1e-15);
}

TEST_CASE("Laplacian hand evaluation") {
  // A closed fan around the origin whose ring sums to (4,0,0): L(v0) = 0 - (1,0,0).
  Points3 v(5, 3);
  v << 0, 0, 0,  //
      2, 0, 0,   //
      1, 1, 0,   //
      0, 0, 0.5, //
      1, -1, -0.5;
  const Mesh m(v, {{0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {0, 4, 1}});
  REQUIRE(m.neighbors(0).size() == 4);
  const Points3 lv = uniform_laplacian(m) * m.vertices();
  CHECK(lv(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(lv(0, 1) == doctest::Approx(0.0));
  CHECK(lv(0, 2) == doctest::Approx(0.0));
}

TEST_CASE("Laplacian is translation invariant and rows sum to zero") {
  const Mesh m = parse_obj(testing::kCubeObj);
  const SparseMatrix lap = uniform_laplacian(m);
  Points3 moved = m.vertices();
  moved.rowwise() += Eigen::RowVector3d(0.25, -3.0, 7.5);
  const Points3 a = lap * m.vertices();
  const Points3 b = lap * moved;
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);

  for (const Mesh* mesh : {&m, &canonical_body()}) {
    const Eigen::SparseMatrix<double, Eigen::RowMajor> l = uniform_laplacian(*mesh);
    double worst = 0.0;
    for (int i = 0; i < l.outerSize(); ++i) {
      double off = 0.0, diag = 0.0;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(l, i); it; ++it) {
        if (it.col() == i) {
          diag = it.value();
        } else {
          off += it.value();
        }
      }
      worst = std::max(worst, std::abs(diag + off));
    }
    CHECK(worst == 0.0);
  }
}

TEST_CASE("Laplacian names an isolated vertex") {
  Points3 v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 5, 5, 5;
  const Mesh m(v, {{0, 1, 2}});
  try {
    uniform_laplacian(m);
    FAIL("expected an error");
  } catch (const MeshError& e) {
    CHECK(testing::message_contains(e, "vertex 3"));
  }
}

TEST_CASE("best-fit rotation recovers a known rotation") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 r0 = random_rotation(gen);
    std::vector<Vec3> p, q;
    for (int k = 0; k < 6; ++k) {
      p.emplace_back(n(gen), n(gen), n(gen));
      q.push_back(r0 * p.back());
    }
    const RotationFit f = fit(p, q);
    CHECK_FALSE(f.degenerate);
    CHECK((f.rotation - r0).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fit(p, p).rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("best-fit rotation on reflected data is a proper rotation at the grid minimum") {
  const std::vector<Vec3> p{{1, 0.2, 0.3}, {-0.4, 1, 0.1}, {0.2, -0.3, 1.2}, {0.7, 0.8, -0.5}};
  std::vector<Vec3> q;
  const Mat3 flip = Vec3(1, 1, -1).asDiagonal();
  for (const Vec3& v : p) q.push_back(flip * v);
  const RotationFit f = fit(p, q);
  CHECK(f.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  const double best = residual(p, q, f.rotation);
  CHECK(best > 1e-3);
  // Brute force over a ZYX Euler grid: nothing beats the closed form.
  double grid_min = 1e300;
  const int steps = 72;
  for (int a = 0; a < steps; ++a) {
    for (int b = 0; b <= steps / 2; ++b) {
      for (int c = 0; c < steps; ++c) {
        const Mat3 r = euler_zyx(-M_PI + 2 * M_PI * a / steps, -M_PI / 2 + M_PI * b / (steps / 2),
                                 -M_PI + 2 * M_PI * c / steps);
        grid_min = std::min(grid_min, residual(p, q, r));
      }
    }
  }
  CHECK(best <= grid_min + 1e-12);
  // The grid is fine enough that its best point is close to the optimum.
  CHECK(grid_min - best < 0.05 * grid_min + 1e-2);
}

TEST_CASE("best-fit rotation is orthonormal with det +1 on random inputs") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    const int count = 1 + trial % 7;
    std::vector<Vec3> p, q;
    std::vector<double> w;
    for (int k = 0; k < count; ++k) {
      p.emplace_back(n(gen), n(gen), n(gen));
      q.emplace_back(n(gen), n(gen), n(gen));
      w.push_back(u(gen));
    }
    const Mat3 r = best_fit_rotation(p, q, w).rotation;
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("best-fit rotation flags all-zero input") {
  const std::vector<Vec3> z(3, Vec3::Zero());
  const RotationFit f = fit(z, z);
  CHECK(f.degenerate);
  CHECK(f.rotation == Mat3::Identity());
  CHECK_THROWS_AS(fit({}, {}), Error);
}

TEST_CASE("OBJ round trip is bit exact in the written format") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Points3 v = testing::grid_mesh(4).vertices();
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = u(gen);
  const Mesh random(v, testing::grid_mesh(4).faces());
  const Mesh once = parse_obj(format_obj(random));
  const Mesh twice = parse_obj(format_obj(once));
  CHECK(once.vertices() == twice.vertices());
  CHECK(once.faces() == twice.faces());
  CHECK((once.vertices() - random.vertices()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(format_obj(once) == format_obj(twice));

  const auto path = std::filesystem::temp_directory_path() / "clothret_roundtrip.obj";
  save_obj(once, path);
  CHECK(load_obj(path).vertices() == once.vertices());
  std::filesystem::remove(path);
}

TEST_CASE("mirror table of a symmetric point set") {
  Points3 v(4, 3);
  v << -1, 0, 0, 1, 0, 0, 0, 1, 0, 0.5, 2, 1;
  CHECK_THROWS_AS(mirror_table(v), MeshError);
  v.row(3) << 0, 2, 1;
  const std::vector<int> t = mirror_table(v);
  CHECK(t == std::vector<int>{1, 0, 2, 3});
}

TEST_CASE("deformation field applies offsets and checks sizes") {
  const Mesh m = testing::grid_mesh(2);
  Points3 off = Points3::Constant(4, 3, 0.5);
  const DeformationField d(off);
  CHECK((d.apply(m.vertices()) - m.vertices()).cwiseAbs().maxCoeff() == 0.5);
  CHECK_THROWS_AS(DeformationField::zero(3).apply(m.vertices()), Error);
  off(0, 0) = std::nan("");
  CHECK_THROWS_AS(DeformationField{off}, Error);
}
