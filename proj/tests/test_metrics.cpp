#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "doctest.h"
#include "support.hpp"

#include "clothret/metrics.hpp"

using namespace clothret;

namespace {

const ClothTemplate& tshirt() { return cloth_template(GarmentKind::TShirt); }

const Dataset& pseudo_real() {
  static const Dataset d = generate_pseudo_real(6, 88);
  return d;
}

Points3 random_points(Rng& rng, int n, double scale = 1.0) {
  return Points3::NullaryExpr(n, 3, [&] { return scale * (2.0 * rng.uniform() - 1.0); });
}

/// Percent mean distance over visible rows, written out longhand.
double oracle_error(const Points2& p, const Points2& t, const std::vector<std::uint8_t>& vis) {
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (!vis[static_cast<std::size_t>(i)]) continue;
    const double dx = p(i, 0) - t(i, 0);
    const double dy = p(i, 1) - t(i, 1);
    sum += std::sqrt(dx * dx + dy * dy);
    ++n;
  }
  return 100.0 * sum / n;
}

}  // namespace

TEST_CASE("reprojection error examples") {
  Rng rng(4);
  const Points2 truth = Points2::NullaryExpr(50, 2, [&] { return rng.uniform(); });
  std::vector<std::uint8_t> vis(50, 1);
  vis[3] = vis[17] = 0;
  CHECK(*reprojection_error(truth, truth, vis) == 0.0);

  Points2 shifted = truth;
  shifted.col(0).array() += 0.01;
  CHECK(*reprojection_error(shifted, truth, vis) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*reprojection_error(shifted, truth, vis, ReprojectionForm::SquaredSum) ==
        doctest::Approx(48 * 1e-4).epsilon(1e-10));

  // Hidden vertices never count, however far off they are.
  shifted.row(3) << 9.0, 9.0;
  CHECK(*reprojection_error(shifted, truth, vis) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_FALSE(reprojection_error(shifted, truth, std::vector<std::uint8_t>(50, 0)).has_value());
  CHECK_THROWS_AS(reprojection_error(shifted, truth, std::vector<std::uint8_t>(49, 1)), Error);
}

TEST_CASE("reprojection error matches an independent recomputation") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(300));
    const Points2 p = Points2::NullaryExpr(n, 2, [&] { return rng.uniform(); });
    const Points2 t = Points2::NullaryExpr(n, 2, [&] { return rng.uniform(); });
    std::vector<std::uint8_t> vis(static_cast<std::size_t>(n));
    for (auto& v : vis) v = rng.uniform() < 0.7;
    vis[0] = 1;
    const double got = *reprojection_error(p, t, vis);
    CHECK(std::abs(got - oracle_error(p, t, vis)) <= 1e-12 * std::max(1.0, got));
  }
}

TEST_CASE("reprojection error through the camera projects the template") {
  const GroundTruth& g = pseudo_real().ground_truth(0);
  const Points2 truth = truth_points(g, tshirt());
  CHECK(*reprojection_error(g.deformation, g.camera, tshirt(), truth, g.cloth_visible) == 0.0);
  Camera moved = g.camera;
  moved.t.y() -= 0.02;
  CHECK(*reprojection_error(g.deformation, moved, tshirt(), truth, g.cloth_visible) ==
        doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("reprojection error ignores a consistent vertex permutation") {
  Rng rng(6);
  const int n = 120;
  const Points2 p = Points2::NullaryExpr(n, 2, [&] { return rng.uniform(); });
  const Points2 t = Points2::NullaryExpr(n, 2, [&] { return rng.uniform(); });
  std::vector<std::uint8_t> vis(n);
  for (auto& v : vis) v = rng.uniform() < 0.5;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.index(static_cast<std::size_t>(i + 1))]);
  Points2 pp(n, 2), tp(n, 2);
  std::vector<std::uint8_t> vp(n);
  for (int i = 0; i < n; ++i) {
    pp.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
    tp.row(i) = t.row(perm[static_cast<std::size_t>(i)]);
    vp[static_cast<std::size_t>(i)] = vis[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  CHECK(*reprojection_error(pp, tp, vp) == doctest::Approx(*reprojection_error(p, t, vis)).epsilon(1e-13));
}

TEST_CASE("temporal stability examples") {
  SUBCASE("uniform straight-line motion") {
    Rng rng(7);
    const Points3 start = random_points(rng, 20);
    const Points3 step = random_points(rng, 20, 0.1);
    std::vector<Points3> frames;
    for (int t = 0; t < 6; ++t) frames.push_back(start + t * step);
    const StabilityResult r = temporal_stability(frames);
    CHECK(r.frames_used == 4);
    CHECK(std::abs(*r.value - 1.0) <= 1e-9);
  }
  SUBCASE("right-angle path") {
    std::vector<Points3> frames(3, Points3::Zero(2, 3));
    frames[1].row(0) << 1, 0, 0;
    frames[2].row(0) << 1, 1, 0;
    frames[0].row(1) << 5, 5, 5;
    frames[1].row(1) << 5, 5, 5.5;
    frames[2].row(1) << 5, 4.5, 5.5;
    const StabilityResult r = temporal_stability(frames);
    CHECK(std::abs(*r.value - std::sqrt(2.0)) <= 1e-9);
    CHECK(r.ratios.size() == 2);
  }
  SUBCASE("oscillating vertices are skipped") {
    std::vector<Points3> frames(3, Points3::Zero(2, 3));
    frames[1].row(0) << 0.3, 0, 0;  // returns to its start
    frames[1].row(1) << 1, 0, 0;
    frames[2].row(1) << 2, 0, 0;
    const StabilityResult r = temporal_stability(frames);
    CHECK(r.vertices_skipped == 1);
    CHECK(*r.value == doctest::Approx(1.0));
  }
  SUBCASE("frames with every vertex skipped are excluded") {
    std::vector<Points3> frames(4, Points3::Zero(3, 3));
    frames[3].setConstant(1.0);
    const StabilityResult r = temporal_stability(frames);
    CHECK(r.frames_excluded == 1);
    CHECK(r.frames_used == 1);
    const StabilityResult still = temporal_stability(std::vector<Points3>(3, Points3::Ones(4, 3)));
    CHECK_FALSE(still.value.has_value());
    CHECK(still.frames_excluded == 1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(temporal_stability(std::vector<Points3>(2, Points3::Zero(1, 3))), Error);
    CHECK_THROWS_AS(temporal_stability(std::vector<Points3>{Points3::Zero(1, 3), Points3::Zero(2, 3), Points3::Zero(1, 3)}),
                    Error);
  }
}

TEST_CASE("temporal stability is at least one on random trajectories") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Points3> frames;
    for (int t = 0; t < 5; ++t) frames.push_back(random_points(rng, 10));
    const StabilityResult r = temporal_stability(frames);
    for (double x : r.ratios) CHECK(x >= 1.0);
    CHECK(*r.value >= 1.0);
  }
}

TEST_CASE("deformation sequences are measured on the deformed template") {
  Rng rng(9);
  const Points3 rest = random_points(rng, 15);
  std::vector<DeformationField> seq;
  std::vector<Points3> frames;
  for (int t = 0; t < 4; ++t) {
    seq.emplace_back(random_points(rng, 15, 0.2));
    frames.push_back(seq.back().apply(rest));
  }
  CHECK(*temporal_stability(seq, rest).value == *temporal_stability(frames).value);
}

TEST_CASE("model evaluation and ablation reports") {
  const ModelParams a = initialize(tshirt().vertex_count(), kBodyVertexCount, 1);
  const ModelParams b = initialize(tshirt().vertex_count(), kBodyVertexCount, 2);
  const std::vector<int> idx{0, 2, 4, 5};

  const EvalReport r = evaluate_model("a", a, pseudo_real(), idx);
  REQUIRE(r.n() == 4);
  CHECK(r.missing == 0);
  double mean = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int k = idx[i];
    const auto [d, cam] = forward(a, pseudo_real().sample(k).s);
    const GroundTruth& g = pseudo_real().ground_truth(k);
    const double e = *reprojection_error(d, cam, tshirt(), truth_points(g, tshirt()), g.cloth_visible);
    CHECK(r.errors[i] == e);
    CHECK(e >= 0.0);
    mean += e / 4;
  }
  CHECK(r.mean_pct == doctest::Approx(mean).epsilon(1e-12));
  double var = 0.0;
  for (double e : r.errors) var += (e - mean) * (e - mean) / 4;
  CHECK(r.std_pct == doctest::Approx(std::sqrt(var)).epsilon(1e-10));

  const auto same = run_ablation({{"x", a}, {"y", a}, {"z", a}}, pseudo_real(), idx);
  REQUIRE(same.size() == 3);
  for (const auto& rep : same) {
    CHECK(rep.errors == same.front().errors);
    CHECK(rep.mean_pct == same.front().mean_pct);
  }
  const auto two = run_ablation({{"a", a}, {"b", b}}, pseudo_real(), idx);
  CHECK(two[0].errors == r.errors);
  CHECK(two[1].variant == "b");

  const ModelParams other = initialize(cloth_template(GarmentKind::Dress).vertex_count(), kBodyVertexCount, 1);
  CHECK_THROWS_WITH_AS(run_ablation({{"a", a}, {"dress", other}}, pseudo_real(), idx),
                       doctest::Contains("different template"), Error);
}

TEST_CASE("refined evaluation never uses the caller's weights") {
  const ModelParams a = initialize(tshirt().vertex_count(), kBodyVertexCount, 3);
  const ModelParams copy = a;
  EvalOptions opt;
  opt.refine = true;
  for (auto& st : opt.refine_config.stages) st.max_iterations = 3;
  const EvalReport r = evaluate_model("a", a, pseudo_real(), {1}, opt);
  CHECK(r.refined);
  CHECK(r.n() == 1);
  CHECK(a == copy);
  const EvalReport again = evaluate_model("a", a, pseudo_real(), {1}, opt);
  CHECK(again.errors == r.errors);
}

TEST_CASE("sequence evaluation reports stability") {
  GenerateOptions opt;
  opt.domain = Domain::PseudoReal;
  opt.seed = 12;
  const Dataset seq = generate_sequence(opt, 4);
  const ModelParams a = initialize(tshirt().vertex_count(), kBodyVertexCount, 4);
  const SequenceEval ev = evaluate_sequence("a", a, seq);
  CHECK(ev.deformations.size() == 4);
  CHECK(ev.report.n() == 4);
  REQUIRE(ev.stability.value.has_value());
  CHECK(*ev.stability.value >= 1.0);
  CHECK(ev.report.stability_mean == ev.stability.value);
  CHECK(*ev.stability.value == *temporal_stability(ev.deformations, tshirt().mesh->vertices()).value);
}

TEST_CASE("reports serialize with the documented keys") {
  EvalReport r;
  r.variant = "+Lc+Ld";
  r.errors = {1.0, 3.0};
  r.mean_pct = 2.0;
  r.std_pct = 1.0;
  r.config["seed"] = "7";
  EvalReport s = r;
  s.variant = "seq";
  s.stability_mean = 1.25;
  const auto j = nlohmann::json::parse(reports_json({r, s}));
  REQUIRE(j.is_array());
  REQUIRE(j.size() == 2);
  for (const char* key : {"variant", "mean_pct", "std_pct", "stability_mean", "n"}) CHECK(j[0].contains(key));
  CHECK(j[0]["variant"] == "+Lc+Ld");
  CHECK(j[0]["n"] == 2);
  CHECK(j[0]["stability_mean"].is_null());
  CHECK(j[1]["stability_mean"] == 1.25);
  CHECK(j[0]["config"]["seed"] == "7");
}
