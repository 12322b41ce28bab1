#include <cmath>

#include <doctest.h>

#include "clothret/body.hpp"
#include "clothret/cloth_solver.hpp"
#include "clothret/dataset.hpp"
#include "clothret/garment.hpp"
#include "sim_oracle.hpp"
#include "support.hpp"

using namespace clothret;
using testing::gradient_descent;
using testing::OracleEnergy;
using testing::quad;
using testing::tube;

namespace {

SolverSettings tight() {
  SolverSettings s;
  s.tolerance = 1e-14;
  s.max_iterations = 20000;
  return s;
}

}  // namespace

TEST_CASE("contact map threshold") {
  const Mesh body = tube(0.1, 3, 8, 0.5);
  SUBCASE("coincident vertices pair at distance zero") {
    Points3 v = body.vertices();
    const Mesh cloth = body.with_vertices(v);
    const ContactMap cm = build_contact_map(cloth, body, 0.02);
    CHECK(cm.size() == body.vertex_count());
    for (const auto& p : cm.pairs) CHECK(p.cloth == p.body);
    CHECK(cm.rest_offsets.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("vertices at twice the radius are excluded") {
    Points3 v = body.vertices();
    v.row(0) *= 1.0 + 0.04 / 0.1;  // 2 eps_c radially outside its ring partner
    const Mesh cloth = body.with_vertices(v);
    const ContactMap cm = build_contact_map(cloth, body, 0.02);
    CHECK(cm.size() == body.vertex_count() - 1);
    CHECK(cm.membership[0] == 0);
  }
  SUBCASE("nothing in range suggests a larger radius") {
    Points3 v = body.vertices() * 3.0;
    try {
      build_contact_map(body.with_vertices(v), body, 0.02);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(testing::message_contains(e, "larger contact radius"));
    }
  }
}

TEST_CASE("tube around a tube pairs ring vertices with the same-ring body vertex") {
  const Mesh body = tube(0.1, 4, 12, 0.3);
  const Mesh cloth = tube(0.1 + 0.01, 4, 12, 0.3);
  const ContactMap cm = build_contact_map(cloth, body, 0.02);
  REQUIRE(cm.size() == cloth.vertex_count());
  for (const auto& p : cm.pairs) {
    // Exhaustive nearest neighbor.
    int best = -1;
    double best_d = 1e300;
    for (int b = 0; b < body.vertex_count(); ++b) {
      const double d = (cloth.vertices().row(p.cloth) - body.vertices().row(b)).norm();
      if (d < best_d) {
        best_d = d;
        best = b;
      }
    }
    CHECK(p.body == best);
    CHECK(p.body == p.cloth);
  }
  CHECK_NOTHROW(cm.validate(cloth.vertex_count(), body.vertex_count()));
  CHECK_THROWS_AS(cm.validate(cloth.vertex_count() + 1, body.vertex_count()), Error);
}

TEST_CASE("shipped templates") {
  for (GarmentKind kind : {GarmentKind::TShirt, GarmentKind::Sleeveless, GarmentKind::Dress}) {
    const ClothTemplate& t = cloth_template(kind);
    CAPTURE(garment_name(kind));
    CHECK(t.contacts.size() >= 20);
    CHECK_NOTHROW(t.contacts.validate(t.vertex_count(), kBodyVertexCount));
    CHECK(static_cast<int>(t.mirror->size()) == t.vertex_count());
    CHECK(parse_garment(garment_name(kind)) == kind);
  }
  CHECK(cloth_template(GarmentKind::TShirt).vertex_count() == doctest::Approx(600).epsilon(0.15));
  CHECK(cloth_template(GarmentKind::Sleeveless).vertex_count() == doctest::Approx(450).epsilon(0.15));
  CHECK(cloth_template(GarmentKind::Dress).vertex_count() == doctest::Approx(700).epsilon(0.15));
  CHECK_THROWS_AS(parse_garment("coat"), Error);
}

TEST_CASE("rest pose maps to the zero field") {
  for (GarmentKind kind : {GarmentKind::TShirt, GarmentKind::Sleeveless, GarmentKind::Dress}) {
    const ClothTemplate& t = cloth_template(kind);
    const auto [d, report] = simulate_deformation(*t.mesh, canonical_body(), t.contacts);
    CHECK(d.offsets().cwiseAbs().maxCoeff() < 1e-9);
    CHECK(report.converged);
  }
}

TEST_CASE("rigid body motion moves the cloth rigidly") {
  const ClothTemplate& t = cloth_template(GarmentKind::TShirt);
  const Mat3 r0 = euler_zyx(0.4, -0.3, 0.2);
  const Eigen::RowVector3d d(0.1, -0.2, 0.3);
  Points3 moved = canonical_body().vertices() * r0.transpose();
  moved.rowwise() += d;
  const Mesh body = canonical_body().with_vertices(moved);
  const auto [field, report] = simulate_deformation(*t.mesh, body, t.contacts);
  Points3 expect = t.mesh->vertices() * r0.transpose();
  expect.rowwise() += d;
  CHECK((field.apply(t.mesh->vertices()) - expect).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(report.energy_trace.back() < 1e-8);
}

TEST_CASE("tiny quad with two lifted contacts reaches the zero-energy set") {
  // Two contacts leave E invariant under rotation about the line through the
  // targets, so the minimizers form a circle; positions are compared on the
  // three-contact quad below.
  const Mesh q = quad();
  const ClothSolver solver(q, {0, 1}, 1.0, 0.5);
  Points3 targets(2, 3);
  targets << 0, 0, 0.1, 1, 0, 0.1;
  const auto [x, report] = solver.solve(targets, q.vertices(), 1e-15, 50000);
  Points3 lifted = q.vertices();
  lifted.col(2).array() += 0.1;
  CHECK((x - lifted).cwiseAbs().maxCoeff() < 1e-9);
  const OracleEnergy oracle{q, {0, 1}, targets, 1.0, 0.5};
  const Points3 brute = gradient_descent(oracle, q.vertices());
  CHECK(oracle(brute, nullptr) < 1e-12);
  CHECK(oracle(x, nullptr) < 1e-12);
  // The brute-force minimizer is a rigid image of the quad through the targets.
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK((brute.row(i) - brute.row(j)).norm() ==
            doctest::Approx((q.vertices().row(i) - q.vertices().row(j)).norm()).epsilon(1e-5));
    }
  }
}

TEST_CASE("tiny quad matches a brute-force minimizer") {
  const Mesh q = quad();
  const std::vector<int> contacts{0, 1, 3};
  const ClothSolver solver(q, contacts, 1.0, 0.5);
  const auto check = [&](const Points3& targets) {
    const auto [x, report] = solver.solve(targets, q.vertices(), 1e-15, 50000);
    const OracleEnergy oracle{q, contacts, targets, 1.0, 0.5};
    const Points3 brute = gradient_descent(oracle, q.vertices());
    CHECK((x - brute).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(solver.energy(x, targets) == doctest::Approx(oracle(x, nullptr)).epsilon(1e-9));
    CHECK(oracle(x, nullptr) > 1e-6);
  };
  SUBCASE("one corner lifted") {
    Points3 targets(3, 3);
    targets << 0, 0, 0.1, 1, 0, 0, 0, 1, 0;
    check(targets);
  }
  SUBCASE("two corners lifted, one pulled sideways") {
    Points3 targets(3, 3);
    targets << 0, 0, 0.1, 1.05, 0, 0.1, 0, 1, 0;
    check(targets);
  }
}

TEST_CASE("energy never increases across iterations") {
  const ClothTemplate& t = cloth_template(GarmentKind::TShirt);
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Mesh body = pose_body(sample_pose(seed));
    for (double lr : {0.5, 1.0, 2.0}) {
      SolverSettings s;
      s.lambda_rigid = lr;
      const auto [d, report] = simulate_deformation(*t.mesh, body, t.contacts, s);
      for (std::size_t k = 1; k < report.energy_trace.size(); ++k) {
        CHECK(report.energy_trace[k] <= report.energy_trace[k - 1] * (1.0 + 1e-12));
      }
      CHECK(report.iterations >= 1);
    }
  }
}

TEST_CASE("translating the body translates the cloth") {
  const ClothTemplate& t = cloth_template(GarmentKind::Dress);
  const Mesh body = pose_body(sample_pose(31));
  Points3 shifted = body.vertices();
  const Eigen::RowVector3d d(0.3, -0.1, 0.25);
  shifted.rowwise() += d;
  const auto a = simulate_deformation(*t.mesh, body, t.contacts, tight()).first;
  const auto b = simulate_deformation(*t.mesh, body.with_vertices(shifted), t.contacts, tight()).first;
  Points3 expect = a.offsets();
  expect.rowwise() += d;
  CHECK((b.offsets() - expect).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("stiffer rigidity approaches the best rigid fit to the contacts") {
  // A small tube bent at its top ring, so every solve can be driven to the
  // minimizer; local-global needs ~10x more iterations per decade of lambda_r.
  const Mesh m = tube(0.1, 6, 10, 0.5);
  std::vector<int> ids;
  for (int s = 0; s < 10; ++s) {
    ids.push_back(s);
    ids.push_back(50 + s);
  }
  Points3 rest_contacts(static_cast<Eigen::Index>(ids.size()), 3);
  for (std::size_t c = 0; c < ids.size(); ++c) rest_contacts.row(static_cast<Eigen::Index>(c)) = m.vertices().row(ids[c]);
  for (double bend : {0.1, 0.6}) {
    const Mat3 b = euler_zyx(0.0, 0.0, bend);
    const Vec3 pivot(0.0, 0.25, 0.0);
    Points3 targets = rest_contacts;
    for (std::size_t c = 0; c < ids.size(); ++c) {
      if (ids[c] < 50) continue;
      const Vec3 p = rest_contacts.row(static_cast<Eigen::Index>(c)).transpose();
      targets.row(static_cast<Eigen::Index>(c)) = (pivot + b * (p - pivot)).transpose();
    }
    const Eigen::RowVector3d ca = rest_contacts.colwise().mean(), cb = targets.colwise().mean();
    const Mat3 rot =
        rotation_from_covariance((rest_contacts.rowwise() - ca).transpose() * (targets.rowwise() - cb)).rotation;
    Points3 rigid = (m.vertices().rowwise() - ca) * rot.transpose();
    rigid.rowwise() += cb;
    double previous = 1e300;
    for (double lr : {1.0, 10.0, 100.0, 1000.0}) {
      const ClothSolver solver(m, ids, lr, 0.5);
      const auto [x, report] = solver.solve(targets, m.vertices(), 1e-15, 200000);
      const double residual = (x - rigid).norm();
      CAPTURE(bend);
      CAPTURE(lr);
      CHECK(report.converged);
      CHECK(residual < previous);
      previous = residual;
    }
    CHECK(previous < 2e-4);
  }
}

TEST_CASE("deformation is bounded by the contact displacement") {
  // Ratio of the largest offset to the largest contact displacement, measured
  // over 40 sampled poses per template (worst 4.07, t-shirt) and frozen
  // with headroom.
  constexpr double kFrozenBound = 5.0;
  for (GarmentKind kind : {GarmentKind::TShirt, GarmentKind::Sleeveless, GarmentKind::Dress}) {
    const ClothTemplate& t = cloth_template(kind);
    double worst = 0.0;
    for (std::uint64_t seed = 200; seed < 240; ++seed) {
      const Mesh body = pose_body(sample_pose(seed));
      const Points3 targets = contact_targets(t.contacts, body);
      double contact_move = 0.0;
      for (int c = 0; c < t.contacts.size(); ++c) {
        contact_move =
            std::max(contact_move, (targets.row(c) - t.mesh->vertices().row(t.contacts.pairs[c].cloth)).norm());
      }
      const auto d = simulate_deformation(*t.mesh, body, t.contacts).first;
      REQUIRE(d.offsets().allFinite());
      worst = std::max(worst, d.offsets().rowwise().norm().maxCoeff() / contact_move);
    }
    MESSAGE(garment_name(kind) << " offset / contact displacement ratio " << worst);
    CHECK(worst < kFrozenBound);
  }
}

TEST_CASE("solver errors") {
  const Mesh q = quad();
  CHECK_THROWS_AS(ClothSolver(q, {}, 1.0, 0.5), Error);
  // Two disconnected triangles with a contact on only one of them.
  Points3 v(6, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 5, 0, 0, 6, 0, 0, 5, 1, 0;
  const Mesh split(v, {{0, 1, 2}, {3, 4, 5}});
  try {
    ClothSolver(split, {0}, 1.0, 0.5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(testing::message_contains(e, "singular"));
  }
  const ClothSolver solver(q, {0, 1}, 1.0, 0.5);
  Points3 bad(2, 3);
  bad << 0, 0, std::nan(""), 1, 0, 0;
  try {
    solver.solve(bad, q.vertices(), 1e-6, 10);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(testing::message_contains(e, "iteration 0"));
  }
}
