#include "clothret/metrics.hpp"

#include <cmath>

#include <json.hpp>

namespace clothret {

namespace {

constexpr double kDegenerateSpan = 1e-9;

void summarize(EvalReport& r) {
  if (r.errors.empty()) return;
  double sum = 0.0;
  for (double e : r.errors) sum += e;
  r.mean_pct = sum / static_cast<double>(r.errors.size());
  double var = 0.0;
  for (double e : r.errors) var += (e - r.mean_pct) * (e - r.mean_pct);
  r.std_pct = std::sqrt(var / static_cast<double>(r.errors.size()));
}

std::pair<DeformationField, Camera> predict(const ModelParams& params, const SampleTuple& sample,
                                            const ClothTemplate& tmpl, const EvalOptions& opt) {
  if (!opt.refine) return forward(params, sample.s);
  RefineResult r = refine_online(params, sample, tmpl, opt.refine_config);
  return {std::move(r.deformation), r.camera};
}

void check_model(const ModelParams& params, const Dataset& data) {
  const ClothTemplate& tmpl = cloth_template(data.garment());
  if (params.layout.cloth_vertices != tmpl.vertex_count() || params.layout.body_points != data.body_points()) {
    throw Error("model (M=" + std::to_string(params.layout.cloth_vertices) + ") does not match the " +
                std::string(garment_name(data.garment())) + " template (M=" + std::to_string(tmpl.vertex_count()) +
                ")");
  }
}

void echo(EvalReport& r, const Dataset& data, const EvalOptions& opt) {
  r.refined = opt.refine;
  r.config["garment"] = std::string(garment_name(data.garment()));
  r.config["domain"] = std::string(domain_name(data.domain()));
  r.config["data_seed"] = std::to_string(data.seed());
  r.config["metric"] = opt.form == ReprojectionForm::MeanDistance ? "mean_distance_pct" : "squared_sum";
  r.config["refine"] = opt.refine ? "on" : "off";
}

}  // namespace

std::optional<double> reprojection_error(const Points2& predicted, const Points2& truth,
                                         const std::vector<std::uint8_t>& visible, ReprojectionForm form) {
  if (predicted.rows() != truth.rows() || static_cast<std::size_t>(truth.rows()) != visible.size()) {
    throw Error("reprojection_error: point sets and visibility must be index aligned");
  }
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < truth.rows(); ++i) {
    if (!visible[static_cast<std::size_t>(i)]) continue;
    const double d2 = (predicted.row(i) - truth.row(i)).squaredNorm();
    sum += form == ReprojectionForm::MeanDistance ? std::sqrt(d2) : d2;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return form == ReprojectionForm::MeanDistance ? 100.0 * sum / n : sum;
}

std::optional<double> reprojection_error(const DeformationField& deformation, const Camera& cam,
                                         const ClothTemplate& tmpl, const Points2& truth,
                                         const std::vector<std::uint8_t>& visible, ReprojectionForm form) {
  return reprojection_error(project(deformation.apply(tmpl.mesh->vertices()), cam), truth, visible, form);
}

StabilityResult temporal_stability(const std::vector<Points3>& frames) {
  if (frames.size() < 3) throw Error("temporal_stability needs at least 3 frames");
  for (const auto& f : frames) {
    if (f.rows() != frames.front().rows()) throw Error("temporal_stability: frames differ in vertex count");
  }
  StabilityResult out;
  double sum = 0.0;
  for (std::size_t t = 1; t + 1 < frames.size(); ++t) {
    const Points3& prev = frames[t - 1];
    const Points3& cur = frames[t];
    const Points3& next = frames[t + 1];
    int used = 0;
    for (Eigen::Index i = 0; i < cur.rows(); ++i) {
      const double span = (next.row(i) - prev.row(i)).norm();
      if (span < kDegenerateSpan) {
        ++out.vertices_skipped;
        continue;
      }
      const double ratio = ((next.row(i) - cur.row(i)).norm() + (cur.row(i) - prev.row(i)).norm()) / span;
      out.ratios.push_back(ratio);
      sum += ratio;
      ++used;
    }
    if (used == 0) {
      ++out.frames_excluded;
    } else {
      ++out.frames_used;
    }
  }
  if (!out.ratios.empty()) out.value = sum / static_cast<double>(out.ratios.size());
  return out;
}

StabilityResult temporal_stability(const std::vector<DeformationField>& sequence, const Points3& rest) {
  std::vector<Points3> frames;
  frames.reserve(sequence.size());
  for (const auto& d : sequence) frames.push_back(d.apply(rest));
  return temporal_stability(frames);
}

EvalReport evaluate_model(const std::string& variant, const ModelParams& params, const Dataset& data,
                          const std::vector<int>& indices, const EvalOptions& opt) {
  check_model(params, data);
  const ClothTemplate& tmpl = cloth_template(data.garment());
  EvalReport r;
  r.variant = variant;
  echo(r, data, opt);
  for (int i : indices) {
    const GroundTruth& truth = data.ground_truth(i);
    const auto [d, cam] = predict(params, data.sample(i), tmpl, opt);
    const auto e = reprojection_error(d, cam, tmpl, truth_points(truth, tmpl), truth.cloth_visible, opt.form);
    if (e) {
      r.errors.push_back(*e);
    } else {
      ++r.missing;
    }
  }
  summarize(r);
  return r;
}

SequenceEval evaluate_sequence(const std::string& variant, const ModelParams& params, const Dataset& sequence,
                               const EvalOptions& opt) {
  check_model(params, sequence);
  const ClothTemplate& tmpl = cloth_template(sequence.garment());
  SequenceEval out;
  out.report.variant = variant;
  echo(out.report, sequence, opt);
  for (int i = 0; i < sequence.size(); ++i) {
    const GroundTruth& truth = sequence.ground_truth(i);
    auto [d, cam] = predict(params, sequence.sample(i), tmpl, opt);
    const auto e = reprojection_error(d, cam, tmpl, truth_points(truth, tmpl), truth.cloth_visible, opt.form);
    if (e) {
      out.report.errors.push_back(*e);
    } else {
      ++out.report.missing;
    }
    out.deformations.push_back(std::move(d));
  }
  summarize(out.report);
  if (out.deformations.size() >= 3) {
    out.stability = temporal_stability(out.deformations, tmpl.mesh->vertices());
    out.report.stability_mean = out.stability.value;
  }
  return out;
}

std::vector<EvalReport> run_ablation(const std::vector<std::pair<std::string, ModelParams>>& variants,
                                     const Dataset& data, const std::vector<int>& indices, const EvalOptions& opt) {
  for (const auto& [name, params] : variants) {
    if (params.layout.cloth_vertices != variants.front().second.layout.cloth_vertices ||
        params.layout.body_points != variants.front().second.layout.body_points) {
      throw Error("variant '" + name + "' is bound to a different template than '" + variants.front().first + "'");
    }
  }
  std::vector<EvalReport> out;
  for (const auto& [name, params] : variants) out.push_back(evaluate_model(name, params, data, indices, opt));
  return out;
}

std::string reports_json(const std::vector<EvalReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["variant"] = r.variant;
    j["mean_pct"] = r.mean_pct;
    j["std_pct"] = r.std_pct;
    j["stability_mean"] = r.stability_mean ? nlohmann::ordered_json(*r.stability_mean) : nlohmann::ordered_json();
    j["n"] = r.n();
    j["refined"] = r.refined;
    j["missing"] = r.missing;
    j["errors"] = r.errors;
    j["config"] = r.config;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

}  // namespace clothret
