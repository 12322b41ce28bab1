#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/SparseCholesky>

#include "clothret/mesh.hpp"

namespace clothret {

inline constexpr double kDefaultContactRadius = 0.02;

/// Prescribed cloth-to-body correspondences found in the shared rest frame.
struct ContactMap {
  struct Pair {
    int cloth;
    int body;
  };
  std::vector<Pair> pairs;
  std::vector<std::uint8_t> membership;  // per cloth vertex
  /// Rest body positions the map was built against.
  Points3 body_rest;
  /// Rest offset cloth - body of every pair (zero for coincident contacts).
  Points3 rest_offsets;
  /// Nearest rest body vertex of every cloth vertex (used for warm starts).
  std::vector<int> nearest_body;

  int size() const { return static_cast<int>(pairs.size()); }
  /// Throws Error if the map does not index into meshes of these sizes.
  void validate(int cloth_vertices, int body_vertices) const;
};

/// Pairs every cloth vertex with its nearest body vertex and keeps pairs
/// closer than `radius`. Throws Error when nothing is in contact.
ContactMap build_contact_map(const Mesh& cloth, const Mesh& body_rest, double radius = kDefaultContactRadius);

struct SolverSettings {
  /// Weight of E_c. The contact term is a soft penalty; large values approach
  /// hard contacts.
  double contact_weight = 1.0;
  double lambda_rigid = 1.0;
  double lambda_laplacian = 0.5;
  double tolerance = 1e-6;
  int max_iterations = 100;
};

struct SolverReport {
  std::vector<double> energy_trace;
  int iterations = 0;
  bool converged = false;
};

/// Local-global minimizer of
///   E(M) = w_c sum_c |M_c - T_c|^2
///        + lambda_r sum_i sum_{j in N(i)} |(M_i - M_j) - R_i (Mr_i - Mr_j)|^2
///        + lambda_s sum_i |(L M)_i - R_i (L Mr)_i|^2
/// over positions M with per-vertex rotations R_i, Mr the rest template.
///
/// The system matrix only depends on the template, the contact set and the
/// weights, so it is factored once; solve() is const and thread safe.
class ClothSolver {
 public:
  ClothSolver(const Mesh& rest, std::vector<int> contact_vertices, double lambda_rigid, double lambda_laplacian,
              double contact_weight = 1.0);

  const Mesh& rest() const { return rest_; }
  const std::vector<int>& contact_vertices() const { return contacts_; }

  /// Minimizes E from `initial`; targets holds one row per contact vertex.
  std::pair<Points3, SolverReport> solve(const Points3& targets, const Points3& initial, double tolerance,
                                         int max_iterations) const;

  /// E(M) with rotations at their optimum for M.
  double energy(const Points3& positions, const Points3& targets) const;

 private:
  // Fits every R_i for fixed positions and returns E at the new rotations.
  double local_step(const Points3& positions, const Points3& lap_positions, const Points3& targets,
                    std::vector<Mat3>& rotations) const;

  Mesh rest_;
  std::vector<int> contacts_;
  double lambda_rigid_;
  double lambda_laplacian_;
  double contact_weight_;
  SparseMatrix laplacian_;
  Points3 rest_lap_;
  std::shared_ptr<const Eigen::SimplicialLDLT<SparseMatrix>> factor_;
};

/// Contact targets for a posed body: the body vertex plus the rest offset,
/// carried by the best-fit rotation of the body vertex's one-ring.
Points3 contact_targets(const ContactMap& contacts, const Mesh& body_posed);

/// Cloth positions where every vertex follows its nearest body vertex rigidly.
Points3 attached_guess(const Mesh& cloth_rest, const ContactMap& contacts, const Mesh& body_posed);

/// Deforms the template onto a posed body; returns M - Mr. The rest pose maps
/// to the zero field.
std::pair<DeformationField, SolverReport> simulate_deformation(const Mesh& cloth_rest, const Mesh& body_posed,
                                                               const ContactMap& contacts,
                                                               const SolverSettings& settings = {});

/// Same, reusing a solver built for this template, contact set and weights.
std::pair<DeformationField, SolverReport> simulate_deformation(const ClothSolver& solver, const Mesh& body_posed,
                                                               const ContactMap& contacts,
                                                               const SolverSettings& settings);

}  // namespace clothret
