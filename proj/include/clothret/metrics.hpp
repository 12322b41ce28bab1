#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clothret/adaptation.hpp"
#include "clothret/camera.hpp"
#include "clothret/dataset.hpp"
#include "clothret/regressor.hpp"

namespace clothret {

enum class ReprojectionForm {
  /// 100 * mean over visible vertices of the Euclidean distance in the
  /// normalized crop frame (percent of the image size).
  MeanDistance,
  /// Sum over visible vertices of the squared distance, normalized units.
  SquaredSum,
};

/// Reprojection error between index-aligned point sets. Empty when no vertex is visible.
std::optional<double> reprojection_error(const Points2& predicted, const Points2& truth,
                                         const std::vector<std::uint8_t>& visible,
                                         ReprojectionForm form = ReprojectionForm::MeanDistance);
/// Same, projecting the template plus the predicted deformation first.
std::optional<double> reprojection_error(const DeformationField& deformation, const Camera& cam,
                                         const ClothTemplate& tmpl, const Points2& truth,
                                         const std::vector<std::uint8_t>& visible,
                                         ReprojectionForm form = ReprojectionForm::MeanDistance);

struct StabilityResult {
  /// Mean over interior frames and vertices of the path-length ratio; empty
  /// when every frame was excluded.
  std::optional<double> value;
  int frames_used = 0;
  int frames_excluded = 0;  // every vertex skipped in that frame
  long long vertices_skipped = 0;
  std::vector<double> ratios;  // every defined (vertex, frame) ratio
};

/// Temporal stability as a mean: (|M(t+1) - M(t)| + |M(t) - M(t-1)|) / |M(t+1) - M(t-1)|,
/// skipping vertices whose denominator is below 1e-9. Needs >= 3 frames.
StabilityResult temporal_stability(const std::vector<Points3>& frames);
StabilityResult temporal_stability(const std::vector<DeformationField>& sequence, const Points3& rest);

struct EvalReport {
  std::string variant;
  bool refined = false;
  std::vector<double> errors;  // percent, one per sample with a defined error
  int missing = 0;             // samples without a visible vertex
  double mean_pct = 0.0;
  double std_pct = 0.0;  // population standard deviation
  std::optional<double> stability_mean;
  std::map<std::string, std::string> config;

  int n() const { return static_cast<int>(errors.size()); }
};

struct EvalOptions {
  bool refine = false;
  RefineConfig refine_config;
  ReprojectionForm form = ReprojectionForm::MeanDistance;
};

/// Reprojection error of the model on the given records, against the sealed ground truth.
/// Every sample is predicted on its own (refinement uses a private copy).
EvalReport evaluate_model(const std::string& variant, const ModelParams& params, const Dataset& data,
                          const std::vector<int>& indices, const EvalOptions& opt = {});

/// Predicted deformation of every frame (refined or not) and its stability
/// score; the report also carries the per-frame reprojection errors.
struct SequenceEval {
  EvalReport report;
  std::vector<DeformationField> deformations;
  StabilityResult stability;
};
SequenceEval evaluate_sequence(const std::string& variant, const ModelParams& params, const Dataset& sequence,
                               const EvalOptions& opt = {});

/// One report per variant on the same test records. Throws Error when the
/// variants are bound to different templates.
std::vector<EvalReport> run_ablation(const std::vector<std::pair<std::string, ModelParams>>& variants,
                                     const Dataset& data, const std::vector<int>& indices,
                                     const EvalOptions& opt = {});

/// JSON array of reports with keys variant, mean_pct, std_pct,
/// stability_mean (null when undefined), n, plus refined, missing, errors
/// and config.
std::string reports_json(const std::vector<EvalReport>& reports);

}  // namespace clothret
