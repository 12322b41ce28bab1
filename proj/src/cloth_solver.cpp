#include "clothret/cloth_solver.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace clothret {

void ContactMap::validate(int cloth_vertices, int body_vertices) const {
  if (pairs.empty()) throw Error("contact map is empty");
  if (static_cast<int>(membership.size()) != cloth_vertices) {
    throw Error("contact map built for " + std::to_string(membership.size()) + " cloth vertices, got " +
                std::to_string(cloth_vertices));
  }
  if (body_rest.rows() != body_vertices) {
    throw Error("contact map built for " + std::to_string(body_rest.rows()) + " body vertices, got " +
                std::to_string(body_vertices));
  }
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(cloth_vertices), 0);
  for (const Pair& p : pairs) {
    if (p.cloth < 0 || p.cloth >= cloth_vertices || p.body < 0 || p.body >= body_vertices) {
      throw Error("contact pair index out of range");
    }
    if (seen[static_cast<std::size_t>(p.cloth)]++) {
      throw Error("cloth vertex " + std::to_string(p.cloth) + " appears twice in the contact map");
    }
  }
}

ContactMap build_contact_map(const Mesh& cloth, const Mesh& body_rest, double radius) {
  ContactMap cm;
  cm.membership.assign(static_cast<std::size_t>(cloth.vertex_count()), 0);
  cm.body_rest = body_rest.vertices();
  cm.nearest_body.resize(static_cast<std::size_t>(cloth.vertex_count()));
  const Points3& body = body_rest.vertices();
  for (int j = 0; j < cloth.vertex_count(); ++j) {
    Eigen::Index best = 0;
    const double d2 = (body.rowwise() - cloth.vertices().row(j)).rowwise().squaredNorm().minCoeff(&best);
    cm.nearest_body[static_cast<std::size_t>(j)] = static_cast<int>(best);
    if (std::sqrt(d2) < radius) {
      cm.pairs.push_back({j, static_cast<int>(best)});
      cm.membership[static_cast<std::size_t>(j)] = 1;
    }
  }
  cm.rest_offsets.resize(cm.size(), 3);
  for (int c = 0; c < cm.size(); ++c) {
    const auto& p = cm.pairs[static_cast<std::size_t>(c)];
    cm.rest_offsets.row(c) = cloth.vertices().row(p.cloth) - body.row(p.body);
  }
  if (cm.pairs.empty()) {
    throw Error("no cloth vertex lies within " + std::to_string(radius) +
                " m of the body; try a larger contact radius");
  }
  return cm;
}

namespace {

// Best-fit rotation of a body vertex's one-ring from rest to posed.
Mat3 ring_rotation(const Mesh& posed, const Points3& rest, int v) {
  Mat3 cov = Mat3::Zero();
  const Eigen::RowVector3d p0 = rest.row(v), p1 = posed.vertices().row(v);
  for (int n : posed.neighbors(v)) {
    cov += (rest.row(n) - p0).transpose() * (posed.vertices().row(n) - p1);
  }
  return rotation_from_covariance(cov).rotation;
}

// Connected components must each carry a contact or the system is singular.
void check_anchored(const Mesh& mesh, const std::vector<int>& contacts) {
  const int n = mesh.vertex_count();
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  int count = 0;
  for (int s = 0; s < n; ++s) {
    if (comp[static_cast<std::size_t>(s)] >= 0) continue;
    std::vector<int> stack{s};
    comp[static_cast<std::size_t>(s)] = count;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : mesh.neighbors(v)) {
        if (comp[static_cast<std::size_t>(w)] < 0) {
          comp[static_cast<std::size_t>(w)] = count;
          stack.push_back(w);
        }
      }
    }
    ++count;
  }
  std::vector<std::uint8_t> anchored(static_cast<std::size_t>(count), 0);
  for (int c : contacts) anchored[static_cast<std::size_t>(comp[static_cast<std::size_t>(c)])] = 1;
  for (int c = 0; c < count; ++c) {
    if (!anchored[static_cast<std::size_t>(c)]) {
      throw Error("singular system: a connected cloth component has no contact vertex");
    }
  }
}

}  // namespace

ClothSolver::ClothSolver(const Mesh& rest, std::vector<int> contact_vertices, double lambda_rigid,
                         double lambda_laplacian, double contact_weight)
    : rest_(rest),
      contacts_(std::move(contact_vertices)),
      lambda_rigid_(lambda_rigid),
      lambda_laplacian_(lambda_laplacian),
      contact_weight_(contact_weight) {
  if (contacts_.empty()) throw Error("singular system: no contact vertices");
  if (!(lambda_rigid_ >= 0.0 && lambda_laplacian_ >= 0.0)) throw Error("energy weights must be non-negative");
  if (!(contact_weight_ > 0.0 && std::isfinite(contact_weight_))) throw Error("contact weight must be positive");
  for (int c : contacts_) {
    if (c < 0 || c >= rest_.vertex_count()) throw Error("contact vertex out of range");
  }
  check_anchored(rest_, contacts_);
  laplacian_ = uniform_laplacian(rest_);
  rest_lap_ = laplacian_ * rest_.vertices();

  const int n = rest_.vertex_count();
  std::vector<Eigen::Triplet<double>> entries;
  for (int c : contacts_) entries.emplace_back(c, c, contact_weight_);
  for (int i = 0; i < n; ++i) {
    for (int j : rest_.neighbors(i)) {
      // directed edge (i, j): (e_i - e_j)(e_i - e_j)^T
      entries.emplace_back(i, i, lambda_rigid_);
      entries.emplace_back(j, j, lambda_rigid_);
      entries.emplace_back(i, j, -lambda_rigid_);
      entries.emplace_back(j, i, -lambda_rigid_);
    }
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(entries.begin(), entries.end());
  a += lambda_laplacian_ * SparseMatrix(laplacian_.transpose() * laplacian_);
  auto factor = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(a);
  if (factor->info() != Eigen::Success) throw Error("singular system: factorization failed");
  factor_ = std::move(factor);
}

double ClothSolver::local_step(const Points3& x, const Points3& lap_x, const Points3& targets,
                               std::vector<Mat3>& rots) const {
  const int n = rest_.vertex_count();
  rots.resize(static_cast<std::size_t>(n));
  const Points3& r = rest_.vertices();
  double ec = 0.0;
  for (std::size_t c = 0; c < contacts_.size(); ++c) {
    ec += (x.row(contacts_[c]) - targets.row(static_cast<Eigen::Index>(c))).squaredNorm();
  }
  double er = 0.0, es = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 d0 = rest_lap_.row(i).transpose();
    const Vec3 d = lap_x.row(i).transpose();
    Mat3 cov = lambda_laplacian_ * d0 * d.transpose();
    for (int j : rest_.neighbors(i)) {
      cov += lambda_rigid_ * (r.row(i) - r.row(j)).transpose() * (x.row(i) - x.row(j));
    }
    const Mat3 rot = rotation_from_covariance(cov).rotation;
    rots[static_cast<std::size_t>(i)] = rot;
    for (int j : rest_.neighbors(i)) {
      const Vec3 e = (x.row(i) - x.row(j)).transpose();
      const Vec3 e0 = (r.row(i) - r.row(j)).transpose();
      er += (e - rot * e0).squaredNorm();
    }
    es += (d - rot * d0).squaredNorm();
  }
  return contact_weight_ * ec + lambda_rigid_ * er + lambda_laplacian_ * es;
}

double ClothSolver::energy(const Points3& x, const Points3& targets) const {
  std::vector<Mat3> rots;
  return local_step(x, laplacian_ * x, targets, rots);
}

std::pair<Points3, SolverReport> ClothSolver::solve(const Points3& targets, const Points3& initial,
                                                    double tolerance, int max_iterations) const {
  const int n = rest_.vertex_count();
  if (targets.rows() != static_cast<Eigen::Index>(contacts_.size())) throw Error("one target per contact required");
  if (initial.rows() != n) throw Error("initial guess has the wrong vertex count");

  SolverReport report;
  Points3 x = initial;
  Points3 lap_x = laplacian_ * x;
  std::vector<Mat3> rots;
  double e = local_step(x, lap_x, targets, rots);
  report.energy_trace.push_back(e);
  if (!std::isfinite(e)) throw Error("non-finite energy at iteration 0");

  const Points3& r = rest_.vertices();
  Eigen::MatrixXd rhs(n, 3);
  Eigen::MatrixXd rotated_lap(n, 3);
  for (int it = 1; it <= max_iterations; ++it) {
    if (e < 1e-24) {
      report.converged = true;
      break;
    }
    rhs.setZero();
    for (std::size_t c = 0; c < contacts_.size(); ++c) rhs.row(contacts_[c]) += contact_weight_ * targets.row(static_cast<Eigen::Index>(c));
    for (int i = 0; i < n; ++i) {
      const Mat3& rot = rots[static_cast<std::size_t>(i)];
      for (int j : rest_.neighbors(i)) {
        const Vec3 b = lambda_rigid_ * (rot * (r.row(i) - r.row(j)).transpose());
        rhs.row(i) += b.transpose();
        rhs.row(j) -= b.transpose();
      }
      rotated_lap.row(i) = (rot * rest_lap_.row(i).transpose()).transpose();
    }
    rhs += lambda_laplacian_ * (laplacian_.transpose() * rotated_lap);
    x = factor_->solve(rhs);

    lap_x = laplacian_ * x;
    const double e_new = local_step(x, lap_x, targets, rots);
    if (!std::isfinite(e_new)) throw Error("non-finite energy at iteration " + std::to_string(it));
    report.energy_trace.push_back(e_new);
    report.iterations = it;
    const bool done = e - e_new <= tolerance * e;
    e = e_new;
    if (done) {
      report.converged = true;
      break;
    }
  }
  return {std::move(x), std::move(report)};
}

Points3 contact_targets(const ContactMap& contacts, const Mesh& body_posed) {
  Points3 targets(contacts.size(), 3);
  for (int c = 0; c < contacts.size(); ++c) {
    const auto& p = contacts.pairs[static_cast<std::size_t>(c)];
    targets.row(c) = body_posed.vertices().row(p.body);
    if (!contacts.rest_offsets.row(c).isZero(0.0)) {
      const Mat3 rot = ring_rotation(body_posed, contacts.body_rest, p.body);
      targets.row(c) += (rot * contacts.rest_offsets.row(c).transpose()).transpose();
    }
  }
  return targets;
}

Points3 attached_guess(const Mesh& cloth_rest, const ContactMap& contacts, const Mesh& body_posed) {
  const int n = cloth_rest.vertex_count();
  std::vector<Mat3> ring(static_cast<std::size_t>(body_posed.vertex_count()));
  std::vector<std::uint8_t> have(ring.size(), 0);
  Points3 out(n, 3);
  for (int j = 0; j < n; ++j) {
    const int b = contacts.nearest_body[static_cast<std::size_t>(j)];
    if (!have[static_cast<std::size_t>(b)]) {
      ring[static_cast<std::size_t>(b)] = ring_rotation(body_posed, contacts.body_rest, b);
      have[static_cast<std::size_t>(b)] = 1;
    }
    const Vec3 offset = (cloth_rest.vertices().row(j) - contacts.body_rest.row(b)).transpose();
    out.row(j) = body_posed.vertices().row(b) + (ring[static_cast<std::size_t>(b)] * offset).transpose();
  }
  return out;
}

std::pair<DeformationField, SolverReport> simulate_deformation(const Mesh& cloth_rest, const Mesh& body_posed,
                                                               const ContactMap& contacts,
                                                               const SolverSettings& settings) {
  contacts.validate(cloth_rest.vertex_count(), body_posed.vertex_count());
  std::vector<int> ids;
  ids.reserve(contacts.pairs.size());
  for (const auto& p : contacts.pairs) ids.push_back(p.cloth);
  const ClothSolver solver(cloth_rest, std::move(ids), settings.lambda_rigid, settings.lambda_laplacian,
                           settings.contact_weight);
  return simulate_deformation(solver, body_posed, contacts, settings);
}

std::pair<DeformationField, SolverReport> simulate_deformation(const ClothSolver& solver, const Mesh& body_posed,
                                                               const ContactMap& contacts,
                                                               const SolverSettings& settings) {
  const Mesh& cloth_rest = solver.rest();
  contacts.validate(cloth_rest.vertex_count(), body_posed.vertex_count());
  if (contacts.size() != static_cast<int>(solver.contact_vertices().size())) {
    throw Error("solver was built for a different contact set");
  }
  auto [x, report] = solver.solve(contact_targets(contacts, body_posed),
                                  attached_guess(cloth_rest, contacts, body_posed), settings.tolerance,
                                  settings.max_iterations);
  return {DeformationField(x - cloth_rest.vertices()), std::move(report)};
}

}  // namespace clothret
