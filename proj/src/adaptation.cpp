#include "clothret/adaptation.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace clothret {

namespace {

void check_shapes(const DeformationField& d, const ClothTemplate& tmpl) {
  if (d.size() != tmpl.vertex_count()) {
    throw Error("deformation has " + std::to_string(d.size()) + " vertices, template has " +
                std::to_string(tmpl.vertex_count()));
  }
}

// Nearest point of `set` to p: (index, squared distance).
std::pair<int, double> nearest(const Points2& set, const Eigen::RowVector2d& p) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < set.rows(); ++i) {
    const double d = (set.row(i) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return {best, best_d};
}

struct Evaluation {
  Prediction pred;
  SelfSupervisedValue value;
};

Evaluation evaluate(const ModelParams& params, const Eigen::MatrixXd& input, const SampleTuple& sample,
                    const ClothTemplate& tmpl, const SelfSupervisedWeights& w) {
  Evaluation e{forward(params, input), {}};
  e.value = self_supervised_loss(e.pred, {&sample}, tmpl, w);
  return e;
}

}  // namespace

SampleLoss contact_loss(const DeformationField& deformation, const Camera& cam, const BodyPointMap& s,
                        const ClothTemplate& tmpl) {
  check_shapes(deformation, tmpl);
  if (s.size() != kBodyVertexCount) throw Error("body point map does not cover the body");
  SampleLoss out;
  out.grad_deformation = Eigen::VectorXd::Zero(3 * deformation.size());
  const ProjectionAdjoint adj(cam);
  const Points3& rest = tmpl.mesh->vertices();
  for (const auto& pair : tmpl.contacts.pairs) {
    if (!s.visible[static_cast<std::size_t>(pair.body)]) continue;
    const Vec3 v = (rest.row(pair.cloth) + deformation.offsets().row(pair.cloth)).transpose();
    const Vec2 r = project_point(v, cam) - s.points.row(pair.body).transpose();
    out.value += r.squaredNorm();
    out.grad_deformation.segment<3>(3 * pair.cloth) += adj.accumulate(v, 2.0 * r, out.grad_camera);
    ++out.terms;
  }
  out.flagged = out.terms == 0;
  return out;
}

ChamferResult chamfer(const Points2& a, const Points2& b, double tau) {
  if (!(tau > 0)) throw Error("outlier threshold must be positive");
  ChamferResult out;
  out.grad_a = Points2::Zero(a.rows(), 2);
  if (a.rows() == 0 || b.rows() == 0) {
    out.starved = true;
    return out;
  }
  const double tau2 = tau * tau;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const auto [j, d] = nearest(b, a.row(i));
    if (d > tau2) continue;
    out.forward += d;
    out.grad_a.row(i) += 2.0 * (a.row(i) - b.row(j));
    out.pairs.emplace_back(static_cast<int>(i), j);
    ++out.inliers;
  }
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const auto [i, d] = nearest(a, b.row(j));
    if (d > tau2) continue;
    out.backward += d;
    out.grad_a.row(i) += 2.0 * (a.row(i) - b.row(j));
    out.pairs.emplace_back(i, static_cast<int>(j));
    ++out.inliers;
  }
  out.value = out.forward + out.backward;
  out.starved = out.inliers == 0;
  return out;
}

SilhouettePairing pair_silhouette(const DeformationField& deformation, const Camera& cam, const Silhouette& target,
                                  const ClothTemplate& tmpl, double tau, int resolution) {
  check_shapes(deformation, tmpl);
  SilhouettePairing out;
  const Mesh mesh = tmpl.mesh->with_vertices(deformation.apply(tmpl.mesh->vertices()));
  const Raster raster = rasterize(mesh, cam, resolution);
  out.anchors = silhouette_anchors(raster, mesh);
  out.reference.resize(out.anchors.size());
  Points2 pred(static_cast<Eigen::Index>(out.anchors.size()), 2);
  for (std::size_t a = 0; a < out.anchors.size(); ++a) {
    for (std::size_t c = 0; c < 3; ++c) {
      out.reference[a][c] = project_point(mesh.vertex(out.anchors[a].corners[c]), cam);
    }
    pred.row(static_cast<Eigen::Index>(a)) = out.anchors[a].center.transpose();
  }
  ChamferResult ch = chamfer(pred, target.points, tau);
  out.pairs = std::move(ch.pairs);
  out.starved = ch.starved;
  return out;
}

SampleLoss silhouette_loss(const DeformationField& deformation, const Camera& cam, const Silhouette& target,
                           const ClothTemplate& tmpl, const SilhouettePairing& pairing) {
  check_shapes(deformation, tmpl);
  SampleLoss out;
  out.grad_deformation = Eigen::VectorXd::Zero(3 * deformation.size());
  out.flagged = pairing.starved;
  const Points3 v = deformation.apply(tmpl.mesh->vertices());
  const ProjectionAdjoint adj(cam);
  for (const auto& [a, j] : pairing.pairs) {
    const SilhouetteAnchor& anchor = pairing.anchors.at(static_cast<std::size_t>(a));
    const auto& reference = pairing.reference.at(static_cast<std::size_t>(a));
    std::array<Vec3, 3> corner;
    Vec2 p = anchor.center;
    for (std::size_t c = 0; c < 3; ++c) {
      corner[c] = v.row(anchor.corners[c]).transpose();
      p += anchor.weights(static_cast<Eigen::Index>(c)) * (project_point(corner[c], cam) - reference[c]);
    }
    const Vec2 r = p - target.points.row(j).transpose();
    out.value += r.squaredNorm();
    ++out.terms;
    for (int c = 0; c < 3; ++c) {
      out.grad_deformation.segment<3>(3 * anchor.corners[static_cast<std::size_t>(c)]) +=
          adj.accumulate(corner[static_cast<std::size_t>(c)], 2.0 * anchor.weights(c) * r, out.grad_camera);
    }
  }
  return out;
}

SampleLoss silhouette_loss(const DeformationField& deformation, const Camera& cam, const Silhouette& target,
                           const ClothTemplate& tmpl, double tau, int resolution) {
  return silhouette_loss(deformation, cam, target, tmpl, pair_silhouette(deformation, cam, target, tmpl, tau, resolution));
}

double loss_contact(const ModelParams& params, const SampleTuple& sample, const ClothTemplate& tmpl) {
  const auto [d, cam] = forward(params, sample.s);
  const SampleLoss l = contact_loss(d, cam, sample.s, tmpl);
  if (l.flagged) throw Error("sample has no visible contact pair; L_c is undefined");
  return l.value;
}

double loss_silhouette(const ModelParams& params, const SampleTuple& sample, const ClothTemplate& tmpl, double tau) {
  if (sample.silhouette.size() == 0) throw Error("sample carries no target silhouette");
  const auto [d, cam] = forward(params, sample.s);
  return silhouette_loss(d, cam, sample.silhouette, tmpl, tau).value;
}

SelfSupervisedValue self_supervised_loss(const Prediction& pred, const std::vector<const SampleTuple*>& batch,
                                         const ClothTemplate& tmpl, const SelfSupervisedWeights& w,
                                         const std::vector<SilhouettePairing>* frozen) {
  const int nb = pred.batch();
  if (static_cast<int>(batch.size()) != nb) throw Error("batch size does not match the prediction");
  if (frozen && static_cast<int>(frozen->size()) != nb) throw Error("need one frozen pairing per sample");
  SelfSupervisedValue out;
  out.loss.grad.deformation = Eigen::MatrixXd::Zero(pred.deformation.rows(), nb);
  out.loss.grad.camera = Eigen::MatrixXd::Zero(kCameraOutputs, nb);
  const double inv_b = 1.0 / nb;
  for (int b = 0; b < nb; ++b) {
    const SampleTuple& s = *batch[static_cast<std::size_t>(b)];
    const DeformationField d = pred.deformation_field(b);
    const Camera cam = pred.camera_of(b);
    auto add = [&](const SampleLoss& l, double weight) {
      out.loss.value += inv_b * weight * l.value;
      out.loss.grad.deformation.col(b) += inv_b * weight * l.grad_deformation;
      for (int i = 0; i < kCameraOutputs; ++i) {
        out.loss.grad.camera(i, b) += inv_b * weight * l.grad_camera[static_cast<std::size_t>(i)];
      }
    };
    if (w.contact != 0.0) {
      const SampleLoss l = contact_loss(d, cam, s.s, tmpl);
      out.contact += inv_b * l.value;
      out.contact_flagged += l.flagged;
      add(l, w.contact);
    }
    if (w.silhouette != 0.0) {
      if (s.silhouette.size() == 0) throw Error("silhouette loss needs a target silhouette on every sample");
      out.pairings.push_back(frozen ? (*frozen)[static_cast<std::size_t>(b)]
                                    : pair_silhouette(d, cam, s.silhouette, tmpl, w.tau, w.resolution));
      const SampleLoss l = silhouette_loss(d, cam, s.silhouette, tmpl, out.pairings.back());
      out.silhouette += inv_b * l.value;
      out.silhouette_starved += l.flagged;
      add(l, w.silhouette);
    }
  }
  return out;
}

SemiSupervisedResult train_semisupervised(ModelParams params, const Dataset& synthetic,
                                          const std::vector<int>& synthetic_indices, const Dataset& pseudo,
                                          const std::vector<int>& pseudo_indices, const SemiSupervisedConfig& cfg,
                                          const ProgressSink& log) {
  if (synthetic.domain() != Domain::Synthetic) throw Error("first dataset must be synthetic");
  if (pseudo.domain() != Domain::PseudoReal) throw Error("second dataset must be pseudo-real");
  if (synthetic.garment() != pseudo.garment()) throw Error("datasets are bound to different garment templates");
  const TrainConfig& tc = cfg.train;
  if (tc.batch_size < 1 || tc.epochs < 0 || !(tc.learning_rate > 0)) throw Error("bad training configuration");
  const ClothTemplate& tmpl = cloth_template(synthetic.garment());
  if (params.layout.cloth_vertices != tmpl.vertex_count() || params.layout.body_points != synthetic.body_points()) {
    throw Error("model dimensions do not match the dataset template");
  }
  const bool adapt = cfg.weights.contact != 0.0 || cfg.weights.silhouette != 0.0;

  SemiSupervisedResult result{std::move(params), {}, {}, 0};
  BatchStream synth_stream(synthetic, synthetic_indices, tc.batch_size, tc.augment, tc.seed);
  BatchStream pseudo_stream(pseudo, pseudo_indices, tc.batch_size, tc.augment, mix_seed(tc.seed, 0x9e1));
  const int steps = synth_stream.batches_per_epoch();
  int pseudo_batches = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    double sup = 0.0;
    double self = 0.0;
    for (int s = 0; s < steps; ++s) {
      const double ls = supervised_step(result.params, synth_stream.next(), tc, result.supervised_curve.size());
      result.supervised_curve.push_back(ls);
      sup += ls;
      // With both weights at zero the self-supervised step is the identity.
      if (!adapt) continue;
      const std::vector<SampleTuple> batch = pseudo_stream.next();
      const auto ptrs = pointers(batch);
      const Prediction pred = forward(result.params, encode_batch(ptrs));
      const SelfSupervisedValue v = self_supervised_loss(pred, ptrs, tmpl, cfg.weights);
      if (!std::isfinite(v.loss.value) || v.loss.value > tc.divergence_threshold) {
        std::ostringstream msg;
        msg << "adaptation diverged at step " << result.adaptation_curve.size() << ": loss " << v.loss.value
            << " (L_c " << v.contact << ", L_d " << v.silhouette << ")";
        throw Error(msg.str());
      }
      result.params.values -= tc.learning_rate * backward(result.params, pred, v.loss.grad);
      result.adaptation_curve.push_back(v.loss.value);
      self += v.loss.value;
      ++pseudo_batches;
      if (2 * v.silhouette_starved > static_cast<int>(batch.size())) ++result.starved_batches;
    }
    if (adapt && result.starved_batches > cfg.max_starved_share * pseudo_batches) {
      std::ostringstream msg;
      msg << result.starved_batches << " of " << pseudo_batches
          << " pseudo-real batches had no silhouette inliers; increase the outlier threshold (tau_d = "
          << cfg.weights.tau << ")";
      throw Error(msg.str());
    }
    if (log) {
      std::ostringstream msg;
      msg << "epoch " << epoch + 1 << "/" << tc.epochs << " mean L_s " << sup / steps;
      if (adapt) msg << " mean self-supervised " << self / steps;
      log(msg.str());
    }
  }
  return result;
}

void RefineConfig::validate() const {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const RefineStage& s = stages[i];
    if (!(s.camera_rate > 0) || !(s.deform_rate > 0)) {
      throw Error("refinement stage " + std::to_string(i + 1) + ": rates must be positive");
    }
    if (s.max_iterations < 1) throw Error("refinement stage " + std::to_string(i + 1) + ": cap must be at least 1");
    if (s.contact_weight < 0 || s.silhouette_weight < 0) {
      throw Error("refinement stage " + std::to_string(i + 1) + ": loss weights must be non-negative");
    }
  }
  if (!(tolerance >= 0) || window < 1 || !(tau > 0)) throw Error("bad refinement convergence settings");
  if (!(loss_scale > 0) || !std::isfinite(loss_scale)) throw Error("refinement loss scale must be positive");
}

RefineResult refine_online(const ModelParams& params, const SampleTuple& sample, const ClothTemplate& tmpl,
                           const RefineConfig& cfg) {
  cfg.validate();
  RefineResult out{params, {}, {}, {}};
  const Eigen::MatrixXd input = encode_input(sample.s);
  const auto [cam_lo, cam_hi] = out.params.layout.range(ParamGroup::CameraHead);
  const auto [def_lo, def_hi] = out.params.layout.range(ParamGroup::DeformHead);

  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const RefineStage& stage = cfg.stages[si];
    StageReport& report = out.stages[si];
    const SelfSupervisedWeights w{cfg.loss_scale * stage.contact_weight, cfg.loss_scale * stage.silhouette_weight,
                                  cfg.tau, cfg.resolution};
    if (w.silhouette > 0 && sample.silhouette.size() == 0) throw Error("refinement needs a target silhouette");
    Evaluation cur = evaluate(out.params, input, sample, tmpl, w);
    if (cur.value.contact_flagged && w.silhouette == 0.0) {
      report.skipped = true;
      continue;
    }
    report.losses.push_back(cur.value.loss.value);
    while (report.iterations < stage.max_iterations) {
      if (cur.value.loss.value == 0.0) {
        report.converged = true;
        break;
      }
      const Eigen::VectorXd g = backward(out.params, cur.pred, cur.value.loss.grad, false);
      ModelParams trial = out.params;
      if (stage.camera_head) {
        const auto n = static_cast<Eigen::Index>(cam_hi - cam_lo);
        trial.values.segment(static_cast<Eigen::Index>(cam_lo), n) -=
            stage.camera_rate * g.segment(static_cast<Eigen::Index>(cam_lo), n);
      }
      if (stage.deform_head) {
        const auto n = static_cast<Eigen::Index>(def_hi - def_lo);
        trial.values.segment(static_cast<Eigen::Index>(def_lo), n) -=
            stage.deform_rate * g.segment(static_cast<Eigen::Index>(def_lo), n);
      }
      ++report.iterations;
      Evaluation next = evaluate(trial, input, sample, tmpl, w);
      if (!(next.value.loss.value <= cur.value.loss.value)) {
        report.early_stopped = true;
        break;
      }
      out.params = std::move(trial);
      cur = std::move(next);
      report.losses.push_back(cur.value.loss.value);
      const std::size_t n = report.losses.size();
      const auto window = static_cast<std::size_t>(cfg.window);
      if (n > window) {
        const double before = report.losses[n - 1 - window];
        if (before - report.losses[n - 1] <= cfg.tolerance * before) {
          report.converged = true;
          break;
        }
      }
    }
  }
  const auto [d, cam] = forward(out.params, sample.s);
  out.deformation = d;
  out.camera = cam;
  return out;
}

}  // namespace clothret
