#include "clothret/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>

#include "clothret/binary_io.hpp"

namespace clothret {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 60;
const Vec2 kCropCenter(0.5, 0.5);

std::vector<int> contact_cloth_ids(const ContactMap& cm) {
  std::vector<int> ids;
  for (const auto& p : cm.pairs) ids.push_back(p.cloth);
  return ids;
}

// Solvers for the default material are built once per garment.
const ClothSolver& default_solver(const ClothTemplate& tmpl) {
  static std::map<GarmentKind, std::unique_ptr<ClothSolver>> cache;
  auto& slot = cache[tmpl.kind];
  if (!slot) {
    const SolverSettings d;
    slot = std::make_unique<ClothSolver>(*tmpl.mesh, contact_cloth_ids(tmpl.contacts), d.lambda_rigid,
                                         d.lambda_laplacian);
  }
  return *slot;
}

Mesh scene_mesh(const Mesh& cloth, const Mesh& body) {
  const int nc = cloth.vertex_count();
  Points3 v(nc + body.vertex_count(), 3);
  v.topRows(nc) = cloth.vertices();
  v.bottomRows(body.vertex_count()) = body.vertices();
  std::vector<Face> faces = cloth.faces();
  for (const Face& f : body.faces()) faces.push_back({f[0] + nc, f[1] + nc, f[2] + nc});
  return Mesh(std::move(v), std::move(faces));
}

struct Simulated {
  Mesh body;
  DeformationField deformation;
};

Simulated simulate_cloth(const GenerateOptions& opt, const BodyConfig& cfg, double lambda_rigid,
                         double lambda_laplacian) {
  const ClothTemplate& tmpl = cloth_template(opt.garment);
  Mesh body = pose_body(cfg);
  SolverSettings settings = opt.solver;
  settings.lambda_rigid = lambda_rigid;
  settings.lambda_laplacian = lambda_laplacian;
  const SolverSettings d;
  std::pair<DeformationField, SolverReport> result;
  if (lambda_rigid == d.lambda_rigid && lambda_laplacian == d.lambda_laplacian &&
      settings.contact_weight == d.contact_weight) {
    result = simulate_deformation(default_solver(tmpl), body, tmpl.contacts, settings);
  } else {
    result = simulate_deformation(*tmpl.mesh, body, tmpl.contacts, settings);
  }
  return {std::move(body), std::move(result.first)};
}

DatasetRecord observe(const GenerateOptions& opt, const BodyConfig& cfg, const Simulated& sim, const Camera& cam,
                      double lambda_rigid, double lambda_laplacian, Rng& rng) {
  const ClothTemplate& tmpl = cloth_template(opt.garment);
  const Mesh cloth = tmpl.mesh->with_vertices(sim.deformation.apply(tmpl.mesh->vertices()));
  DatasetRecord rec;
  rec.truth.deformation = sim.deformation;
  rec.truth.camera = cam;
  rec.truth.body = cfg;
  rec.truth.lambda_rigid = lambda_rigid;
  rec.truth.lambda_laplacian = lambda_laplacian;
  rec.truth.clean_points = observe_body(sim.body, cam, opt.resolution);
  const Visibility scene = zbuffer_visibility(scene_mesh(cloth, sim.body), cam, opt.resolution);
  rec.truth.cloth_visible.assign(scene.visible.begin(), scene.visible.begin() + cloth.vertex_count());
  rec.s = rec.truth.clean_points;
  if (opt.domain == Domain::PseudoReal) {
    for (int i = 0; i < rec.s.size(); ++i) {
      if (!rec.s.visible[static_cast<std::size_t>(i)]) continue;
      for (int a = 0; a < 2; ++a) {
        rec.s.points(i, a) = std::clamp(rec.s.points(i, a) + opt.jitter_sigma * rng.normal(), 0.0, 1.0);
      }
    }
  }
  if (opt.store_silhouette.value_or(opt.domain == Domain::PseudoReal)) {
    rec.silhouette = extract_silhouette(cloth, cam, opt.resolution);
  }
  return rec;
}

double log_uniform(Rng& rng, double lo, double hi) { return lo * std::exp(rng.uniform() * std::log(hi / lo)); }

void write_points(ByteWriter& w, const BodyPointMap& s) {
  for (int i = 0; i < s.size(); ++i) {
    w.f64(s.points(i, 0));
    w.f64(s.points(i, 1));
    w.f64(s.visible[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
  }
}

BodyPointMap read_points(ByteReader& r, int n) {
  BodyPointMap s;
  s.points.resize(n, 2);
  s.visible.resize(static_cast<std::size_t>(n));
  s.vertex_ids.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    s.points(i, 0) = r.f64();
    s.points(i, 1) = r.f64();
    const double v = r.f64();
    if (v != 0.0 && v != 1.0) throw Error(r.name() + ": visibility flag must be 0 or 1");
    s.visible[static_cast<std::size_t>(i)] = v != 0.0;
    s.vertex_ids[static_cast<std::size_t>(i)] = i;
  }
  return s;
}

}  // namespace

std::string_view domain_name(Domain d) { return d == Domain::Synthetic ? "synthetic" : "pseudo-real"; }

Domain parse_domain(std::string_view name) {
  if (name == "synthetic") return Domain::Synthetic;
  if (name == "pseudo-real" || name == "pseudo_real") return Domain::PseudoReal;
  throw Error("unknown domain '" + std::string(name) + "' (expected synthetic or pseudo-real)");
}

const ClothTemplate& cloth_template(GarmentKind kind) {
  static std::map<GarmentKind, ClothTemplate> cache;
  auto it = cache.find(kind);
  if (it == cache.end()) {
    const Garment& g = garment(kind);
    it = cache.emplace(kind, ClothTemplate{kind, &g.mesh, &g.mirror, build_contact_map(g.mesh, canonical_body())})
             .first;
  }
  return it->second;
}

Dataset::Dataset(GarmentKind garment, Domain domain, std::uint64_t seed)
    : garment_(garment), domain_(domain), seed_(seed) {}

int Dataset::cloth_vertices() const { return cloth_template(garment_).vertex_count(); }

void Dataset::add(DatasetRecord record) {
  const int m = cloth_vertices();
  if (record.s.size() != kBodyVertexCount) throw Error("record has the wrong number of body points");
  if (record.truth.deformation.size() != m) throw Error("record deformation does not match the template");
  if (static_cast<int>(record.truth.cloth_visible.size()) != m) throw Error("record visibility size mismatch");
  if (record.truth.clean_points.size() != kBodyVertexCount) throw Error("record clean points size mismatch");
  records_.push_back(std::move(record));
}

SampleTuple Dataset::sample(int i) const {
  const DatasetRecord& r = record(i);
  SampleTuple t;
  t.domain = domain_;
  t.s = r.s;
  t.silhouette = r.silhouette;
  if (domain_ == Domain::Synthetic) {
    t.deformation = r.truth.deformation;
    t.camera = r.truth.camera;
    t.body = r.truth.body;
  }
  return t;
}

int Dataset::max_silhouette() const {
  int n = 0;
  for (const auto& r : records_) n = std::max(n, r.silhouette.size());
  return n;
}

std::vector<std::uint8_t> Dataset::serialize() const {
  const int m = cloth_vertices();
  const int ms = kBodyVertexCount;
  const int max_sil = max_silhouette();
  const std::uint32_t public_width = static_cast<std::uint32_t>(1 + 3 * ms + 1 + 2 * max_sil);
  const std::uint32_t sealed_width = static_cast<std::uint32_t>(3 * m + 6 + BodyConfig::kFlatSize + m + 3 * ms + 2);
  const std::uint64_t sealed_offset = kHeaderBytes + records_.size() * public_width * 8ULL;

  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(domain_));
  w.u32(static_cast<std::uint32_t>(garment_));
  w.u64(records_.size());
  w.u32(static_cast<std::uint32_t>(m));
  w.u32(static_cast<std::uint32_t>(ms));
  w.u32(static_cast<std::uint32_t>(max_sil));
  w.u32(public_width);
  w.u32(sealed_width);
  w.u64(sealed_offset);
  w.u64(seed_);

  for (const auto& r : records_) {
    w.f64(static_cast<double>(domain_));
    write_points(w, r.s);
    w.f64(r.silhouette.size());
    for (int k = 0; k < max_sil; ++k) {
      const bool have = k < r.silhouette.size();
      w.f64(have ? r.silhouette.points(k, 0) : 0.0);
      w.f64(have ? r.silhouette.points(k, 1) : 0.0);
    }
  }
  for (const auto& r : records_) {
    const Points3& d = r.truth.deformation.offsets();
    for (int i = 0; i < m; ++i) {
      for (int a = 0; a < 3; ++a) w.f64(d(i, a));
    }
    for (double v : r.truth.camera.to_array()) w.f64(v);
    for (double v : r.truth.body.flatten()) w.f64(v);
    for (auto v : r.truth.cloth_visible) w.f64(v ? 1.0 : 0.0);
    write_points(w, r.truth.clean_points);
    w.f64(r.truth.lambda_rigid);
    w.f64(r.truth.lambda_laplacian);
  }
  return w.buffer();
}

Dataset Dataset::deserialize(std::vector<std::uint8_t> bytes, const std::string& name) {
  ByteReader r(std::move(bytes), name);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw Error(name + ": not a CRDS dataset (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw Error(name + ": unsupported CRDS version " + std::to_string(version));
  const std::uint32_t domain = r.u32();
  const std::uint32_t garment_id = r.u32();
  if (domain > 1) throw Error(name + ": bad domain tag " + std::to_string(domain));
  if (garment_id > 2) throw Error(name + ": bad garment id " + std::to_string(garment_id));
  const std::uint64_t count = r.u64();
  const int m = static_cast<int>(r.u32());
  const int ms = static_cast<int>(r.u32());
  const int max_sil = static_cast<int>(r.u32());
  const std::uint32_t public_width = r.u32();
  const std::uint32_t sealed_width = r.u32();
  const std::uint64_t sealed_offset = r.u64();
  const std::uint64_t seed = r.u64();

  Dataset ds(static_cast<GarmentKind>(garment_id), static_cast<Domain>(domain), seed);
  if (m != ds.cloth_vertices()) {
    throw Error(name + ": header says " + std::to_string(m) + " cloth vertices, the " +
                std::string(garment_name(ds.garment())) + " template has " + std::to_string(ds.cloth_vertices()));
  }
  if (ms != kBodyVertexCount) throw Error(name + ": header body point count " + std::to_string(ms) + " != 240");
  if (public_width != static_cast<std::uint32_t>(1 + 3 * ms + 1 + 2 * max_sil) ||
      sealed_width != static_cast<std::uint32_t>(3 * m + 6 + BodyConfig::kFlatSize + m + 3 * ms + 2)) {
    throw Error(name + ": record widths do not match the header dimensions");
  }
  if (sealed_offset != kHeaderBytes + count * public_width * 8ULL ||
      r.size() != sealed_offset + count * sealed_width * 8ULL) {
    throw Error(name + ": file size does not match the header (truncated or corrupt)");
  }

  std::vector<DatasetRecord> records(static_cast<std::size_t>(count));
  for (std::uint64_t n = 0; n < count; ++n) {
    DatasetRecord& rec = records[n];
    const double tag = r.f64();
    if (tag != static_cast<double>(domain)) throw Error(name + ": record " + std::to_string(n) + " has a foreign domain tag");
    rec.s = read_points(r, ms);
    const double sil_count = r.f64();
    if (!(sil_count >= 0 && sil_count <= max_sil) || sil_count != std::floor(sil_count)) {
      throw Error(name + ": record " + std::to_string(n) + " has a bad silhouette length");
    }
    rec.silhouette.points.resize(static_cast<int>(sil_count), 2);
    for (int k = 0; k < max_sil; ++k) {
      const double x = r.f64(), y = r.f64();
      if (k < sil_count) rec.silhouette.points.row(k) << x, y;
    }
  }
  r.seek(sealed_offset);
  for (std::uint64_t n = 0; n < count; ++n) {
    DatasetRecord& rec = records[n];
    Points3 d(m, 3);
    for (int i = 0; i < m; ++i) {
      for (int a = 0; a < 3; ++a) d(i, a) = r.f64();
    }
    rec.truth.deformation = DeformationField(std::move(d));
    std::array<double, 6> cam{};
    for (double& v : cam) v = r.f64();
    rec.truth.camera = Camera::from_array(cam);
    std::array<double, BodyConfig::kFlatSize> flat{};
    for (double& v : flat) v = r.f64();
    rec.truth.body = BodyConfig::unflatten(flat);
    rec.truth.cloth_visible.resize(static_cast<std::size_t>(m));
    for (auto& v : rec.truth.cloth_visible) v = r.f64() != 0.0;
    rec.truth.clean_points = read_points(r, ms);
    rec.truth.lambda_rigid = r.f64();
    rec.truth.lambda_laplacian = r.f64();
    ds.add(std::move(rec));
  }
  return ds;
}

void Dataset::save(const std::filesystem::path& path) const {
  ByteWriter w;
  const auto bytes = serialize();
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

Dataset Dataset::load(const std::filesystem::path& path) {
  ByteReader r = ByteReader::open(path);
  std::vector<std::uint8_t> bytes(r.size());
  if (!bytes.empty()) r.bytes(bytes.data(), bytes.size());
  return deserialize(std::move(bytes), path.string());
}

Camera sample_camera(const Points3& cloth, const CameraRanges& ranges, Rng& rng) {
  Camera cam;
  cam.euler = {rng.uniform(-ranges.roll, ranges.roll), rng.uniform(-ranges.azimuth, ranges.azimuth),
               rng.uniform(-ranges.tilt, ranges.tilt)};
  cam.k = 1.0;
  cam.t.setZero();
  const Points2 p = project(cloth, cam);
  const Vec2 lo = p.colwise().minCoeff().transpose();
  const Vec2 hi = p.colwise().maxCoeff().transpose();
  const double extent = (hi - lo).maxCoeff();
  const double k_fit = ranges.fill / extent;
  const double k_hi = std::min(ranges.k_max, k_fit);
  const double k_lo = std::min(ranges.k_min, k_hi);
  cam.k = rng.uniform(k_lo, k_hi);
  const Vec2 center = 0.5 * (lo + hi);
  const Vec2 jitter(rng.uniform(-ranges.center_jitter, ranges.center_jitter),
                    rng.uniform(-ranges.center_jitter, ranges.center_jitter));
  cam.t = kCropCenter + jitter - cam.k * center;
  return cam;
}

DatasetRecord simulate_record(const GenerateOptions& opt, const BodyConfig& body, const Camera& cam,
                              double lambda_rigid, double lambda_laplacian, Rng& noise) {
  const Simulated sim = simulate_cloth(opt, body, lambda_rigid, lambda_laplacian);
  return observe(opt, body, sim, cam, lambda_rigid, lambda_laplacian, noise);
}

Dataset generate(const GenerateOptions& opt, const LogSink& log) {
  if (opt.count < 1) throw Error("dataset size must be at least 1");
  const ClothTemplate& tmpl = cloth_template(opt.garment);
  Dataset ds(opt.garment, opt.domain, opt.seed);
  const int max_skips = static_cast<int>(std::floor(opt.max_skip_rate * opt.count));
  int skipped = 0;
  for (std::uint64_t attempt = 0; ds.size() < opt.count; ++attempt) {
    Rng rng(mix_seed(opt.seed, attempt));
    const BodyConfig cfg = sample_pose(rng.next());
    double lr = opt.solver.lambda_rigid, ls = opt.solver.lambda_laplacian;
    if (opt.domain == Domain::PseudoReal) {
      lr *= log_uniform(rng, opt.material_min, opt.material_max);
      ls *= log_uniform(rng, opt.material_min, opt.material_max);
    }
    try {
      const Simulated sim = simulate_cloth(opt, cfg, lr, ls);
      const Camera cam = sample_camera(sim.deformation.apply(tmpl.mesh->vertices()), opt.camera, rng);
      ds.add(observe(opt, cfg, sim, cam, lr, ls, rng));
      if (log && ds.size() % 500 == 0) log("generated " + std::to_string(ds.size()) + " / " + std::to_string(opt.count));
    } catch (const Error& e) {
      ++skipped;
      if (log) log("sample " + std::to_string(attempt) + " skipped: " + e.what());
      if (skipped > max_skips) {
        throw Error("aborting generation: " + std::to_string(skipped) + " samples failed (limit " +
                    std::to_string(max_skips) + ")");
      }
    }
  }
  return ds;
}

Dataset generate_synthetic(int n, std::uint64_t seed, GarmentKind garment) {
  GenerateOptions opt;
  opt.garment = garment;
  opt.domain = Domain::Synthetic;
  opt.count = n;
  opt.seed = seed;
  return generate(opt);
}

Dataset generate_pseudo_real(int n, std::uint64_t seed, GarmentKind garment) {
  GenerateOptions opt;
  opt.garment = garment;
  opt.domain = Domain::PseudoReal;
  opt.count = n;
  opt.seed = seed;
  return generate(opt);
}

Dataset generate_sequence(const GenerateOptions& opt, int frames, const LogSink& log) {
  if (frames < 3) throw Error("a motion sequence needs at least 3 frames");
  const ClothTemplate& tmpl = cloth_template(opt.garment);
  Rng rng(mix_seed(opt.seed, 0x5e9));
  const BodyConfig a = sample_pose(rng.next());
  const BodyConfig b = sample_pose(rng.next());
  double lr = opt.solver.lambda_rigid, ls = opt.solver.lambda_laplacian;
  if (opt.domain == Domain::PseudoReal) {
    lr *= log_uniform(rng, opt.material_min, opt.material_max);
    ls *= log_uniform(rng, opt.material_min, opt.material_max);
  }
  std::vector<BodyConfig> cfgs;
  std::vector<Simulated> sims;
  for (int f = 0; f < frames; ++f) {
    const double u = static_cast<double>(f) / (frames - 1);
    const double w = u * u * (3.0 - 2.0 * u);
    BodyConfig c;
    for (int j = 0; j < kJointCount; ++j) {
      for (int x = 0; x < 3; ++x) c.joint_angles[j][x] = (1 - w) * a.joint_angles[j][x] + w * b.joint_angles[j][x];
      c.length_scale[j] = (1 - w) * a.length_scale[j] + w * b.length_scale[j];
      c.radius_scale[j] = (1 - w) * a.radius_scale[j] + w * b.radius_scale[j];
    }
    cfgs.push_back(c);
    sims.push_back(simulate_cloth(opt, c, lr, ls));
  }
  // One camera framing every frame of the motion.
  const int m = tmpl.vertex_count();
  Points3 all(m * frames, 3);
  for (int f = 0; f < frames; ++f) all.middleRows(f * m, m) = sims[static_cast<std::size_t>(f)].deformation.apply(tmpl.mesh->vertices());
  const Camera cam = sample_camera(all, opt.camera, rng);
  Dataset ds(opt.garment, opt.domain, opt.seed);
  for (int f = 0; f < frames; ++f) {
    ds.add(observe(opt, cfgs[static_cast<std::size_t>(f)], sims[static_cast<std::size_t>(f)], cam, lr, ls, rng));
  }
  if (log) log("generated a " + std::to_string(frames) + "-frame sequence");
  return ds;
}

Split split_indices(int n, double test_fraction, std::uint64_t seed) {
  if (n < 0 || !(test_fraction >= 0.0 && test_fraction <= 1.0)) throw Error("bad split parameters");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, 0x5b117));
  for (int i = n - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.index(static_cast<std::size_t>(i) + 1)]);
  const int n_test = static_cast<int>(std::lround(n * test_fraction));
  Split s;
  s.test.assign(perm.begin(), perm.begin() + n_test);
  s.train.assign(perm.begin() + n_test, perm.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

Vec2 Augmentation::map_point(const Vec2& p) const {
  Vec2 q = flip ? Vec2(1.0 - p.x(), p.y()) : p;
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec2 d = q - kCropCenter;
  return kCropCenter + scale * Vec2(c * d.x() - s * d.y(), s * d.x() + c * d.y()) + shift;
}

Augmentation sample_augmentation(const AugmentConfig& cfg, Rng& rng) {
  Augmentation a;
  if (!cfg.enabled) return a;
  a.flip = rng.uniform() < cfg.flip_probability;
  a.theta = rng.uniform(-cfg.max_rotation, cfg.max_rotation);
  a.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  a.shift = Vec2(rng.uniform(-cfg.max_translation, cfg.max_translation),
                 rng.uniform(-cfg.max_translation, cfg.max_translation));
  return a;
}

Camera augment_camera(const Camera& cam, const Augmentation& aug) {
  Camera out = cam;
  if (aug.flip) {
    out.euler[0] = -cam.euler[0];
    out.euler[1] = -cam.euler[1];
  }
  out.euler[0] += aug.theta;
  out.t = aug.map_point(cam.t);
  out.k = aug.scale * cam.k;
  return out;
}

SampleTuple augment(const SampleTuple& sample, const Augmentation& aug, const ClothTemplate& tmpl) {
  if (aug.identity()) return sample;
  SampleTuple out = sample;
  const auto& body_mirror = body_mirror_table();
  const int n = sample.s.size();
  for (int i = 0; i < n; ++i) {
    const int src = aug.flip ? body_mirror[static_cast<std::size_t>(i)] : i;
    const bool vis = sample.s.visible[static_cast<std::size_t>(src)] != 0;
    Vec2 p = Vec2::Zero();
    bool keep = false;
    if (vis) {
      p = aug.map_point(sample.s.points.row(src).transpose());
      keep = p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0;
    }
    out.s.visible[static_cast<std::size_t>(i)] = keep ? 1 : 0;
    out.s.points.row(i) = keep ? Eigen::RowVector2d(p.transpose()) : Eigen::RowVector2d::Zero();
  }
  std::vector<Vec2> sil;
  for (int k = 0; k < sample.silhouette.size(); ++k) {
    const Vec2 p = aug.map_point(sample.silhouette.points.row(k).transpose());
    if (p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0) sil.push_back(p);
  }
  out.silhouette.points.resize(static_cast<Eigen::Index>(sil.size()), 2);
  for (std::size_t k = 0; k < sil.size(); ++k) out.silhouette.points.row(static_cast<Eigen::Index>(k)) = sil[k].transpose();
  if (sample.camera) out.camera = augment_camera(*sample.camera, aug);
  if (aug.flip && sample.deformation) {
    const Points3& d = sample.deformation->offsets();
    Points3 f(d.rows(), 3);
    for (int j = 0; j < d.rows(); ++j) {
      const int src = (*tmpl.mirror)[static_cast<std::size_t>(j)];
      f.row(j) << -d(src, 0), d(src, 1), d(src, 2);
    }
    out.deformation = DeformationField(std::move(f));
  }
  if (aug.flip && sample.body) out.body = mirror_config(*sample.body);
  return out;
}

Points2 truth_points(const GroundTruth& truth, const ClothTemplate& tmpl) {
  return project(truth.deformation.apply(tmpl.mesh->vertices()), truth.camera);
}

}  // namespace clothret
