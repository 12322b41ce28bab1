#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clothret/adaptation.hpp"
#include "clothret/metrics.hpp"

using namespace clothret;

namespace {

void log_line(const std::string& s) { std::cerr << s << std::endl; }

struct SplitArgs {
  std::string which;
  double test_fraction = 0.2;
  std::uint64_t seed = 7;
};

void add_split(CLI::App* cmd, SplitArgs& a, const std::string& default_split) {
  a.which = default_split;
  cmd->add_option("--split", a.which, "records to use: all, train or test")
      ->check(CLI::IsMember({"all", "train", "test"}))
      ->capture_default_str();
  cmd->add_option("--test-fraction", a.test_fraction, "share of records held out as the test split")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--split-seed", a.seed, "seed of the train/test partition")->capture_default_str();
}

std::vector<int> select(const Dataset& data, const SplitArgs& a) {
  if (a.which == "all") {
    std::vector<int> all(static_cast<std::size_t>(data.size()));
    for (int i = 0; i < data.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  Split s = split_indices(data.size(), a.test_fraction, a.seed);
  return a.which == "train" ? s.train : s.test;
}

bool on_off(const std::string& v) { return v == "on"; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
}

ModelParams load_for(const std::string& path, const Dataset& data) {
  auto [params, garment] = load_weights(path);
  if (garment != data.garment()) {
    throw Error("weights '" + path + "' are for the " + std::string(garment_name(garment)) + " template, data uses " +
                std::string(garment_name(data.garment())));
  }
  return params;
}

void render_prediction(const ClothTemplate& tmpl, const DeformationField& d, const Camera& cam,
                       const std::string& path, const Mesh* body, int resolution) {
  const Mesh cloth = tmpl.mesh->with_vertices(d.apply(tmpl.mesh->vertices()));
  std::vector<RenderLayer> layers{{&cloth, {220, 90, 60}}};
  if (body) layers.push_back({body, {170, 170, 180}});
  write_ppm(render_shaded(layers, cam, resolution), path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image 3D clothes retargeting: data synthesis, training, adaptation, refinement, evaluation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "simulate a synthetic or pseudo-real dataset");
  std::string gen_garment = "tshirt", gen_domain = "synthetic", gen_out;
  int gen_count = 5000, gen_frames = 0;
  std::uint64_t gen_seed = 1;
  gen->add_option("--garment", gen_garment, "tshirt, sleeveless or dress")->capture_default_str();
  gen->add_option("--domain", gen_domain, "synthetic or pseudo-real")->capture_default_str();
  gen->add_option("--n,--count", gen_count, "number of samples")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--sequence", gen_frames, "generate one smooth motion of this many frames instead")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output CRDS file")->required();

  // train
  auto* train = app.add_subcommand("train", "supervised training on a synthetic dataset");
  std::string train_data, train_out, train_curve;
  TrainConfig train_cfg;
  bool train_no_aug = false;
  train->add_option("--data", train_data, "synthetic CRDS file")->required();
  train->add_option("--out", train_out, "output CRWT weights")->required();
  train->add_option("--epochs", train_cfg.epochs, "passes over the data")->capture_default_str();
  train->add_option("--lr", train_cfg.learning_rate, "SGD learning rate")->capture_default_str();
  train->add_option("--batch", train_cfg.batch_size, "mini-batch size")->capture_default_str();
  train->add_option("--seed", train_cfg.seed, "initialization and schedule seed")->capture_default_str();
  train->add_option("--deform-weight", train_cfg.weights.deformation, "weight of the deformation residual")
      ->capture_default_str();
  train->add_option("--camera-weight", train_cfg.weights.camera, "weight of the camera residual")
      ->capture_default_str();
  train->add_flag("--no-augment", train_no_aug, "disable random augmentation");
  train->add_option("--curve", train_curve, "write the per-step loss curve as CSV");

  // adapt
  auto* adapt = app.add_subcommand("adapt", "semi-supervised adaptation to the pseudo-real domain");
  std::string adapt_weights, adapt_synth, adapt_pseudo, adapt_out;
  SemiSupervisedConfig adapt_cfg;
  adapt_cfg.train.epochs = 10;
  bool adapt_no_aug = false;
  SplitArgs adapt_split;
  adapt->add_option("--weights", adapt_weights, "pretrained CRWT weights")->required();
  adapt->add_option("--synth", adapt_synth, "synthetic CRDS file")->required();
  adapt->add_option("--pseudo", adapt_pseudo, "pseudo-real CRDS file")->required();
  adapt->add_option("--out", adapt_out, "output CRWT weights")->required();
  adapt->add_option("--epochs", adapt_cfg.train.epochs, "passes over the synthetic data")->capture_default_str();
  adapt->add_option("--lr", adapt_cfg.train.learning_rate, "SGD learning rate")->capture_default_str();
  adapt->add_option("--batch", adapt_cfg.train.batch_size, "mini-batch size")->capture_default_str();
  adapt->add_option("--seed", adapt_cfg.train.seed, "schedule seed")->capture_default_str();
  adapt->add_option("--lambda-c", adapt_cfg.weights.contact, "weight of L_c")->capture_default_str();
  adapt->add_option("--lambda-d", adapt_cfg.weights.silhouette, "weight of L_d")->capture_default_str();
  adapt->add_option("--tau", adapt_cfg.weights.tau, "Chamfer outlier threshold (crop units)")->capture_default_str();
  adapt->add_flag("--no-augment", adapt_no_aug, "disable random augmentation");
  add_split(adapt, adapt_split, "train");

  // retarget
  auto* retarget = app.add_subcommand("retarget", "predict (and optionally refine) one sample");
  std::string rt_weights, rt_sample, rt_refine = "off", rt_render, rt_obj, rt_json;
  int rt_index = 0;
  retarget->add_option("--weights", rt_weights, "CRWT weights")->required();
  retarget->add_option("--sample", rt_sample, "CRDS file holding the sample")->required();
  retarget->add_option("--index", rt_index, "record index")->capture_default_str();
  retarget->add_option("--refine", rt_refine, "online refinement")->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  retarget->add_option("--render", rt_render, "write a shaded PPM of the retargeted cloth");
  retarget->add_option("--obj", rt_obj, "write the retargeted cloth mesh as OBJ");
  retarget->add_option("--json", rt_json, "write camera, losses and stage reports as JSON");

  // eval
  auto* eval = app.add_subcommand("eval", "reprojection error (and stability on sequences) of one or more models");
  std::vector<std::string> ev_weights;
  std::string ev_data, ev_refine = "off", ev_report, ev_form = "mean";
  SplitArgs ev_split;
  bool ev_sequence = false;
  eval->add_option("--weights", ev_weights, "CRWT weights, optionally as name=path; repeat for an ablation")
      ->required();
  eval->add_option("--data", ev_data, "CRDS file with sealed ground truth")->required();
  eval->add_option("--refine", ev_refine, "online refinement")->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  eval->add_option("--report", ev_report, "JSON report path")->required();
  eval->add_option("--form", ev_form, "mean (percent) or squared-sum")
      ->check(CLI::IsMember({"mean", "squared-sum"}))
      ->capture_default_str();
  eval->add_flag("--sequence", ev_sequence, "treat the data as one motion sequence and report temporal stability");
  add_split(eval, ev_split, "test");

  // render
  auto* render = app.add_subcommand("render", "render the ground truth of one record");
  std::string rd_data, rd_out, rd_svg;
  int rd_index = 0;
  bool rd_body = false;
  render->add_option("--data", rd_data, "CRDS file")->required();
  render->add_option("--index", rd_index, "record index")->capture_default_str();
  render->add_option("--out", rd_out, "PPM path")->required();
  render->add_option("--svg", rd_svg, "also write the stored silhouette and body points as SVG");
  render->add_flag("--body", rd_body, "draw the posed body under the cloth");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      GenerateOptions opt;
      opt.garment = parse_garment(gen_garment);
      opt.domain = parse_domain(gen_domain);
      opt.count = gen_count;
      opt.seed = gen_seed;
      const Dataset ds = gen_frames > 0 ? generate_sequence(opt, gen_frames, log_line) : generate(opt, log_line);
      ds.save(gen_out);
      log_line("wrote " + std::to_string(ds.size()) + " records to " + gen_out);
    } else if (*train) {
      const Dataset data = Dataset::load(train_data);
      train_cfg.augment.enabled = !train_no_aug;
      const ClothTemplate& tmpl = cloth_template(data.garment());
      std::vector<int> all(static_cast<std::size_t>(data.size()));
      for (int i = 0; i < data.size(); ++i) all[static_cast<std::size_t>(i)] = i;
      const ModelParams init = initialize(tmpl.vertex_count(), data.body_points(), train_cfg.seed);
      const TrainResult r = train_supervised(init, data, all, train_cfg, log_line);
      save_weights(r.params, data.garment(), train_out);
      if (!train_curve.empty()) {
        std::string csv = "step,loss\n";
        char line[64];
        for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
          std::snprintf(line, sizeof line, "%zu,%.17g\n", i, r.loss_curve[i]);
          csv += line;
        }
        write_text(train_curve, csv);
      }
    } else if (*adapt) {
      const Dataset synth = Dataset::load(adapt_synth);
      const Dataset pseudo = Dataset::load(adapt_pseudo);
      adapt_cfg.train.augment.enabled = !adapt_no_aug;
      std::vector<int> all(static_cast<std::size_t>(synth.size()));
      for (int i = 0; i < synth.size(); ++i) all[static_cast<std::size_t>(i)] = i;
      const ModelParams init = load_for(adapt_weights, synth);
      const SemiSupervisedResult r =
          train_semisupervised(init, synth, all, pseudo, select(pseudo, adapt_split), adapt_cfg, log_line);
      save_weights(r.params, synth.garment(), adapt_out);
    } else if (*retarget) {
      const Dataset data = Dataset::load(rt_sample);
      const ModelParams params = load_for(rt_weights, data);
      const ClothTemplate& tmpl = cloth_template(data.garment());
      if (rt_index < 0 || rt_index >= data.size()) throw Error("record index out of range");
      const SampleTuple sample = data.sample(rt_index);
      nlohmann::ordered_json j;
      DeformationField d;
      Camera cam;
      if (on_off(rt_refine)) {
        RefineResult r = refine_online(params, sample, tmpl);
        d = std::move(r.deformation);
        cam = r.camera;
        for (const auto& st : r.stages) {
          j["stages"].push_back({{"iterations", st.iterations},
                                 {"converged", st.converged},
                                 {"early_stopped", st.early_stopped},
                                 {"skipped", st.skipped},
                                 {"initial", st.losses.empty() ? 0.0 : st.losses.front()},
                                 {"final", st.losses.empty() ? 0.0 : st.losses.back()}});
        }
      } else {
        std::tie(d, cam) = forward(params, sample.s);
      }
      const SampleLoss lc = contact_loss(d, cam, sample.s, tmpl);
      j["camera"] = cam.to_array();
      j["loss_contact"] = lc.value;
      if (sample.silhouette.size() > 0) j["loss_silhouette"] = silhouette_loss(d, cam, sample.silhouette, tmpl).value;
      const GroundTruth& truth = data.ground_truth(rt_index);
      const auto e = reprojection_error(d, cam, tmpl, truth_points(truth, tmpl), truth.cloth_visible);
      j["reprojection_pct"] = e ? nlohmann::ordered_json(*e) : nlohmann::ordered_json();
      if (!rt_render.empty()) render_prediction(tmpl, d, cam, rt_render, nullptr, kDefaultResolution);
      if (!rt_obj.empty()) save_obj(tmpl.mesh->with_vertices(d.apply(tmpl.mesh->vertices())), rt_obj);
      const std::string text = j.dump(2) + "\n";
      if (!rt_json.empty()) write_text(rt_json, text);
      std::cout << text;
    } else if (*eval) {
      const Dataset data = Dataset::load(ev_data);
      EvalOptions opt;
      opt.refine = on_off(ev_refine);
      opt.form = ev_form == "mean" ? ReprojectionForm::MeanDistance : ReprojectionForm::SquaredSum;
      std::vector<std::pair<std::string, ModelParams>> variants;
      for (const auto& w : ev_weights) {
        const auto eq = w.find('=');
        const std::string name = eq == std::string::npos ? w : w.substr(0, eq);
        const std::string path = eq == std::string::npos ? w : w.substr(eq + 1);
        variants.emplace_back(name, load_for(path, data));
      }
      std::vector<EvalReport> reports;
      if (ev_sequence) {
        for (const auto& [name, params] : variants) reports.push_back(evaluate_sequence(name, params, data, opt).report);
      } else {
        reports = run_ablation(variants, data, select(data, ev_split), opt);
        for (auto& r : reports) r.config["split"] = ev_split.which;
      }
      write_text(ev_report, reports_json(reports));
      for (const auto& r : reports) {
        char line[256];
        std::snprintf(line, sizeof line, "%s: %.4f%% +- %.4f (n=%d)", r.variant.c_str(), r.mean_pct, r.std_pct, r.n());
        std::string msg = line;
        if (r.stability_mean) msg += " stability " + std::to_string(*r.stability_mean);
        log_line(msg);
      }
    } else if (*render) {
      const Dataset data = Dataset::load(rd_data);
      if (rd_index < 0 || rd_index >= data.size()) throw Error("record index out of range");
      const ClothTemplate& tmpl = cloth_template(data.garment());
      const GroundTruth& g = data.ground_truth(rd_index);
      const Mesh body = pose_body(g.body);
      render_prediction(tmpl, g.deformation, g.camera, rd_out, rd_body ? &body : nullptr, kDefaultResolution);
      if (!rd_svg.empty()) {
        Silhouette pts;
        const BodyPointMap& s = data.record(rd_index).s;
        std::vector<int> vis;
        for (int i = 0; i < s.size(); ++i) {
          if (s.visible[static_cast<std::size_t>(i)]) vis.push_back(i);
        }
        pts.points.resize(static_cast<Eigen::Index>(vis.size()), 2);
        for (std::size_t k = 0; k < vis.size(); ++k) pts.points.row(static_cast<Eigen::Index>(k)) = s.points.row(vis[k]);
        write_text(rd_svg, silhouette_svg({{&data.record(rd_index).silhouette, "#d04020"}, {&pts, "#3050c0"}}));
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
