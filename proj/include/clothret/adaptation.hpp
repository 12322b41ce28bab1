#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "clothret/camera.hpp"
#include "clothret/dataset.hpp"
#include "clothret/regressor.hpp"

namespace clothret {

inline constexpr double kDefaultOutlierThreshold = 0.05;

/// Value of a self-supervised loss at one (deformation, camera) pair and its
/// gradient with respect to both.
struct SampleLoss {
  double value = 0.0;
  Eigen::VectorXd grad_deformation;  // 3M, vertex-major
  std::array<double, 6> grad_camera{};
  /// L_c: no visible contact pair. L_d: every pair rejected as an outlier.
  bool flagged = false;
  int terms = 0;
};

/// L_c = sum over contact pairs with a visible body point of
/// |proj(Mr_j + dM_j) - s_z(j)|^2.
SampleLoss contact_loss(const DeformationField& deformation, const Camera& cam, const BodyPointMap& s,
                        const ClothTemplate& tmpl);

/// Symmetric Chamfer sum with outlier rejection. Each point of one set is
/// paired with its nearest neighbor in the other; pairs farther apart than
/// tau are dropped. Pairings are frozen: grad_a holds the derivative of the
/// value with respect to the points of `a` for these pairs.
struct ChamferResult {
  double value = 0.0;
  double forward = 0.0;   // a -> b
  double backward = 0.0;  // b -> a
  Points2 grad_a;
  /// Inlier pairs (index into a, index into b) of both directions.
  std::vector<std::pair<int, int>> pairs;
  int inliers = 0;
  bool starved = false;
};
ChamferResult chamfer(const Points2& a, const Points2& b, double tau);

/// Frozen correspondences of one L_d evaluation: the predicted boundary
/// points as barycentric anchors on the cloth, and the inlier pairs
/// (anchor, target point) of both Chamfer directions. An anchor point is its
/// pixel center plus the barycentric blend of how far its triangle's
/// projected corners moved since pairing, so it equals the center exactly
/// at the pairing parameters.
struct SilhouettePairing {
  std::vector<SilhouetteAnchor> anchors;
  std::vector<std::array<Vec2, 3>> reference;  // projected corners at pairing time
  std::vector<std::pair<int, int>> pairs;
  bool starved = false;
};

SilhouettePairing pair_silhouette(const DeformationField& deformation, const Camera& cam, const Silhouette& target,
                                  const ClothTemplate& tmpl, double tau = kDefaultOutlierThreshold,
                                  int resolution = kDefaultResolution);

/// L_d for fixed pairings: sum over pairs of |anchor point - target point|^2,
/// where each anchor point follows its triangle's projected corners. Equal
/// to the Chamfer value at the parameters the pairing was built for.
SampleLoss silhouette_loss(const DeformationField& deformation, const Camera& cam, const Silhouette& target,
                           const ClothTemplate& tmpl, const SilhouettePairing& pairing);

/// L_d: Chamfer between the target silhouette and the boundary of the
/// rasterized predicted cloth, pairing recomputed for this evaluation.
SampleLoss silhouette_loss(const DeformationField& deformation, const Camera& cam, const Silhouette& target,
                           const ClothTemplate& tmpl, double tau = kDefaultOutlierThreshold,
                           int resolution = kDefaultResolution);

/// Network-level forms of the two losses on a single sample.
double loss_contact(const ModelParams& params, const SampleTuple& sample, const ClothTemplate& tmpl);
double loss_silhouette(const ModelParams& params, const SampleTuple& sample, const ClothTemplate& tmpl,
                       double tau = kDefaultOutlierThreshold);

struct SelfSupervisedWeights {
  double contact = 0.3;
  double silhouette = 1.0;
  double tau = kDefaultOutlierThreshold;
  int resolution = kDefaultResolution;
};

/// lambda_c L_c + lambda_d L_d, averaged over the batch, with the output
/// gradient for backward(). Zero weights skip the corresponding term.
struct SelfSupervisedValue {
  LossValue loss;
  double contact = 0.0;     // batch mean of L_c
  double silhouette = 0.0;  // batch mean of L_d
  int contact_flagged = 0;
  int silhouette_starved = 0;
  std::vector<SilhouettePairing> pairings;  // one per sample when L_d is active
};
/// `frozen`, when given, replaces the per-sample pairings (one per sample).
SelfSupervisedValue self_supervised_loss(const Prediction& pred, const std::vector<const SampleTuple*>& batch,
                                         const ClothTemplate& tmpl, const SelfSupervisedWeights& w,
                                         const std::vector<SilhouettePairing>* frozen = nullptr);

struct SemiSupervisedConfig {
  TrainConfig train;  // epochs, lr, batch size, seed, augmentation, L_s weights
  SelfSupervisedWeights weights;
  /// Abort when more than this share of pseudo-real batches is starved
  /// (a batch is starved when most of its samples have no inlier pair).
  double max_starved_share = 0.5;
};

struct SemiSupervisedResult {
  ModelParams params;
  std::vector<double> supervised_curve;
  std::vector<double> adaptation_curve;
  int starved_batches = 0;
};

/// Alternates one L_s step on a synthetic batch with one
/// (lambda_c L_c + lambda_d L_d) step on a pseudo-real batch. Epochs count
/// passes over the synthetic indices. The synthetic schedule is the one
/// train_supervised draws for the same seed; the pseudo-real batches come
/// from an independent stream.
SemiSupervisedResult train_semisupervised(ModelParams params, const Dataset& synthetic,
                                          const std::vector<int>& synthetic_indices, const Dataset& pseudo,
                                          const std::vector<int>& pseudo_indices, const SemiSupervisedConfig& cfg,
                                          const ProgressSink& log = {});

/// Staged per-sample refinement of the decoder heads.
struct RefineStage {
  bool camera_head = false;
  bool deform_head = false;
  double camera_rate = 1e-5;
  double deform_rate = 1e-5;
  double contact_weight = 1.0;
  double silhouette_weight = 0.0;
  int max_iterations = 200;
};

struct RefineConfig {
  std::array<RefineStage, 3> stages{{
      {true, false, 1e-5, 1e-5, 1.0, 0.0, 200},
      {false, true, 1e-5, 1e-5, 1.0, 0.0, 200},
      {true, true, 0.01 * 1e-5, 0.1 * 1e-5, 0.5, 1.0, 100},
  }};
  /// Multiplies the refinement objective. The rates are quoted for losses in
  /// normalized crop units scaled by this factor; at scale 1 the heads move
  /// too little within the iteration caps.
  double loss_scale = 100.0;
  /// Converged when the loss dropped by less than this fraction over `window` iterations.
  double tolerance = 1e-4;
  int window = 5;
  double tau = kDefaultOutlierThreshold;
  int resolution = kDefaultResolution;

  /// Throws Error unless every rate and the loss scale are positive and every cap at least one.
  void validate() const;
};

struct StageReport {
  std::vector<double> losses;  // objective (with loss_scale) at accepted iterates, from the initial one
  int iterations = 0;
  bool converged = false;
  bool early_stopped = false;  // a step raised the loss and was rolled back
  bool skipped = false;        // loss undefined on this sample (no contacts)
};

struct RefineResult {
  ModelParams params;
  DeformationField deformation;
  Camera camera;
  std::array<StageReport, 3> stages;
};

/// Copies params and refines the heads on one sample with its own L_c and
/// L_d; the trunk never changes.
RefineResult refine_online(const ModelParams& params, const SampleTuple& sample, const ClothTemplate& tmpl,
                           const RefineConfig& cfg = {});

}  // namespace clothret
