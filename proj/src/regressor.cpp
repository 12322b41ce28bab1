#include "clothret/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "clothret/binary_io.hpp"
#include "clothret/random.hpp"

namespace clothret {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'W', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr int kTrunkLayers = 3;
enum Dense : int { kTrunk0 = 0, kDeformHiddenLayer = 3, kDeformOut = 4, kCameraHiddenLayer = 5, kCameraOut = 6 };

const char* dense_name(int d) {
  static const char* names[] = {"trunk.dense1", "trunk.dense2", "trunk.dense3", "deform.dense1",
                                "deform.dense2", "camera.dense1", "camera.dense2"};
  return names[d];
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

Eigen::MatrixXd affine(const ModelParams& p, int d, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z = p.weight(d) * x;
  z.colwise() += p.bias(d);
  return z;
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

ModelLayout::ModelLayout(int m, int ms) : cloth_vertices(m), body_points(ms) {
  if (m < 1 || ms < 1) throw Error("model dimensions must be positive");
  std::size_t off = 0;
  auto add_dense = [&](int in, int out) {
    DenseSlot s{in, out, off, off + static_cast<std::size_t>(in) * out};
    off = s.bias + static_cast<std::size_t>(out);
    dense.push_back(s);
  };
  auto add_norm = [&](int w) {
    norm.push_back({w, off, off + static_cast<std::size_t>(w)});
    off += 2 * static_cast<std::size_t>(w);
  };
  int in = 3 * ms;
  for (int w : kTrunkWidths) {
    add_dense(in, w);
    add_norm(w);
    in = w;
  }
  add_dense(in, kDeformHidden);
  add_dense(kDeformHidden, 3 * m);
  add_dense(in, kCameraHidden);
  add_dense(kCameraHidden, kCameraOutputs);
  size = off;
}

std::pair<std::size_t, std::size_t> ModelLayout::range(ParamGroup g) const {
  switch (g) {
    case ParamGroup::Trunk:
      return {0, dense[kDeformHiddenLayer].weight};
    case ParamGroup::DeformHead:
      return {dense[kDeformHiddenLayer].weight, dense[kCameraHiddenLayer].weight};
    case ParamGroup::CameraHead:
      return {dense[kCameraHiddenLayer].weight, size};
  }
  return {0, 0};
}

std::string ModelLayout::describe(std::size_t i) const {
  for (std::size_t d = 0; d < dense.size(); ++d) {
    const DenseSlot& s = dense[d];
    if (i >= s.weight && i < s.bias) return std::string(dense_name(static_cast<int>(d))) + ".W";
    if (i >= s.bias && i < s.bias + static_cast<std::size_t>(s.out)) return std::string(dense_name(static_cast<int>(d))) + ".b";
  }
  for (std::size_t n = 0; n < norm.size(); ++n) {
    if (i >= norm[n].gain && i < norm[n].shift) return "trunk.norm" + std::to_string(n + 1) + ".gain";
    if (i >= norm[n].shift && i < norm[n].shift + static_cast<std::size_t>(norm[n].width)) {
      return "trunk.norm" + std::to_string(n + 1) + ".shift";
    }
  }
  return "out of range";
}

Eigen::Map<const RowMatrix> ModelParams::weight(int d) const {
  const DenseSlot& s = layout.dense.at(static_cast<std::size_t>(d));
  return {values.data() + s.weight, s.out, s.in};
}
Eigen::Map<RowMatrix> ModelParams::weight(int d) {
  const DenseSlot& s = layout.dense.at(static_cast<std::size_t>(d));
  return {values.data() + s.weight, s.out, s.in};
}
Eigen::Map<const Eigen::VectorXd> ModelParams::bias(int d) const {
  const DenseSlot& s = layout.dense.at(static_cast<std::size_t>(d));
  return {values.data() + s.bias, s.out};
}
Eigen::Map<Eigen::VectorXd> ModelParams::bias(int d) {
  const DenseSlot& s = layout.dense.at(static_cast<std::size_t>(d));
  return {values.data() + s.bias, s.out};
}
Eigen::Map<const Eigen::VectorXd> ModelParams::gain(int n) const {
  const NormSlot& s = layout.norm.at(static_cast<std::size_t>(n));
  return {values.data() + s.gain, s.width};
}
Eigen::Map<const Eigen::VectorXd> ModelParams::shift(int n) const {
  const NormSlot& s = layout.norm.at(static_cast<std::size_t>(n));
  return {values.data() + s.shift, s.width};
}

void ModelParams::check_finite(const std::string& what) const {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values(i))) {
      throw Error(what + ": non-finite value in " + layout.describe(static_cast<std::size_t>(i)));
    }
  }
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double softplus_inverse(double k) {
  if (!(k > 0)) throw Error("softplus_inverse needs k > 0");
  return k > 30 ? k : std::log(std::expm1(k));
}

ModelParams initialize(int cloth_vertices, int body_points, std::uint64_t seed) {
  ModelParams p{ModelLayout(cloth_vertices, body_points)};
  Rng rng(mix_seed(seed, 0x1417));
  for (std::size_t d = 0; d < p.layout.dense.size(); ++d) {
    const DenseSlot& s = p.layout.dense[d];
    const bool output = d == kDeformOut || d == kCameraOut;
    const double bound = output ? 0.1 * std::sqrt(3.0 / s.in) : std::sqrt(6.0 / s.in);
    auto w = p.weight(static_cast<int>(d));
    for (int r = 0; r < s.out; ++r) {
      for (int c = 0; c < s.in; ++c) w(r, c) = rng.uniform(-bound, bound);
    }
  }
  for (const NormSlot& n : p.layout.norm) {
    p.values.segment(static_cast<Eigen::Index>(n.gain), n.width).setOnes();
  }
  auto cam_bias = p.bias(kCameraOut);
  cam_bias(3) = 0.5;
  cam_bias(4) = 0.5;
  cam_bias(5) = softplus_inverse(0.5);
  return p;
}

Eigen::VectorXd encode_input(const BodyPointMap& s) {
  Eigen::VectorXd x(3 * s.size());
  for (int i = 0; i < s.size(); ++i) {
    const bool vis = s.visible[static_cast<std::size_t>(i)] != 0;
    x(3 * i) = vis ? s.points(i, 0) : 0.0;
    x(3 * i + 1) = vis ? s.points(i, 1) : 0.0;
    x(3 * i + 2) = vis ? 1.0 : 0.0;
  }
  return x;
}

Eigen::MatrixXd encode_batch(const std::vector<const SampleTuple*>& batch) {
  if (batch.empty()) throw Error("empty batch");
  Eigen::MatrixXd x(3 * batch.front()->s.size(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->s.size() * 3 != x.rows()) throw Error("batch mixes body point counts");
    x.col(static_cast<Eigen::Index>(b)) = encode_input(batch[b]->s);
  }
  return x;
}

DeformationField Prediction::deformation_field(int b) const {
  const Eigen::Index m = deformation.rows() / 3;
  Points3 d(m, 3);
  Eigen::Map<Eigen::VectorXd>(d.data(), 3 * m) = deformation.col(b);
  return DeformationField(std::move(d));
}

Camera Prediction::camera_of(int b) const {
  std::array<double, 6> a{};
  for (int i = 0; i < 6; ++i) a[static_cast<std::size_t>(i)] = camera(i, b);
  return Camera::from_array(a);
}

Prediction forward(const ModelParams& p, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != p.layout.input_size()) {
    throw Error("input has " + std::to_string(inputs.rows()) + " rows, model expects " +
                std::to_string(p.layout.input_size()));
  }
  Prediction out;
  ForwardCache& c = out.cache;
  c.input = inputs;
  const Eigen::Index batch = inputs.cols();
  c.normalized.reserve(kTrunkLayers);
  c.inv_std.reserve(kTrunkLayers);
  c.trunk_out.reserve(kTrunkLayers);
  const Eigen::MatrixXd* h = &c.input;
  for (int l = 0; l < kTrunkLayers; ++l) {
    Eigen::MatrixXd z = affine(p, kTrunk0 + l, *h);
    const double n = static_cast<double>(z.rows());
    Eigen::VectorXd inv(batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double mean = z.col(b).mean();
      z.col(b).array() -= mean;
      const double var = z.col(b).squaredNorm() / n;
      inv(b) = 1.0 / std::sqrt(var + kLayerNormEpsilon);
      z.col(b) *= inv(b);
    }
    Eigen::MatrixXd y = (z.array().colwise() * p.gain(l).array()).matrix();
    y.colwise() += p.shift(l);
    c.normalized.push_back(std::move(z));
    c.inv_std.push_back(std::move(inv));
    c.trunk_out.push_back(relu(y));
    h = &c.trunk_out.back();
  }
  c.deform_hidden = relu(affine(p, kDeformHiddenLayer, *h));
  out.deformation = affine(p, kDeformOut, c.deform_hidden);
  c.camera_hidden = relu(affine(p, kCameraHiddenLayer, *h));
  c.camera_raw = affine(p, kCameraOut, c.camera_hidden);
  out.camera = c.camera_raw;
  for (Eigen::Index b = 0; b < batch; ++b) out.camera(5, b) = softplus(c.camera_raw(5, b));
  return out;
}

std::pair<DeformationField, Camera> forward(const ModelParams& params, const BodyPointMap& s) {
  if (s.size() != params.layout.body_points) throw Error("body point map does not match the model");
  const Prediction p = forward(params, Eigen::MatrixXd(encode_input(s)));
  return {p.deformation_field(0), p.camera_of(0)};
}

Eigen::VectorXd backward(const ModelParams& p, const Prediction& pred, const OutputGradient& grad,
                         bool include_trunk) {
  const ForwardCache& c = pred.cache;
  const Eigen::Index batch = pred.deformation.cols();
  if (grad.deformation.rows() != pred.deformation.rows() || grad.deformation.cols() != batch ||
      grad.camera.rows() != kCameraOutputs || grad.camera.cols() != batch) {
    throw Error("output gradient shape does not match the prediction");
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.layout.size));
  auto put_dense = [&](int d, const Eigen::MatrixXd& dz, const Eigen::MatrixXd& x) {
    const DenseSlot& s = p.layout.dense[static_cast<std::size_t>(d)];
    Eigen::Map<RowMatrix>(g.data() + s.weight, s.out, s.in).noalias() = dz * x.transpose();
    Eigen::Map<Eigen::VectorXd>(g.data() + s.bias, s.out) = dz.rowwise().sum();
  };

  Eigen::MatrixXd d_raw = grad.camera;
  for (Eigen::Index b = 0; b < batch; ++b) d_raw(5, b) *= sigmoid(c.camera_raw(5, b));
  const Eigen::MatrixXd& feat = c.trunk_out.back();
  put_dense(kCameraOut, d_raw, c.camera_hidden);
  Eigen::MatrixXd d_ch = p.weight(kCameraOut).transpose() * d_raw;
  d_ch = (c.camera_hidden.array() > 0.0).select(d_ch, 0.0);
  put_dense(kCameraHiddenLayer, d_ch, feat);
  Eigen::MatrixXd d_feat = p.weight(kCameraHiddenLayer).transpose() * d_ch;

  put_dense(kDeformOut, grad.deformation, c.deform_hidden);
  Eigen::MatrixXd d_dh = p.weight(kDeformOut).transpose() * grad.deformation;
  d_dh = (c.deform_hidden.array() > 0.0).select(d_dh, 0.0);
  put_dense(kDeformHiddenLayer, d_dh, feat);
  d_feat.noalias() += p.weight(kDeformHiddenLayer).transpose() * d_dh;

  Eigen::MatrixXd d_h = std::move(d_feat);
  for (int l = include_trunk ? kTrunkLayers - 1 : -1; l >= 0; --l) {
    const Eigen::MatrixXd& out = c.trunk_out[static_cast<std::size_t>(l)];
    const Eigen::MatrixXd& xh = c.normalized[static_cast<std::size_t>(l)];
    const Eigen::MatrixXd d_y = (out.array() > 0.0).select(d_h, 0.0);
    const NormSlot& ns = p.layout.norm[static_cast<std::size_t>(l)];
    Eigen::Map<Eigen::VectorXd>(g.data() + ns.gain, ns.width) = (d_y.array() * xh.array()).rowwise().sum();
    Eigen::Map<Eigen::VectorXd>(g.data() + ns.shift, ns.width) = d_y.rowwise().sum();
    Eigen::MatrixXd d_xh = (d_y.array().colwise() * p.gain(l).array()).matrix();
    const double n = static_cast<double>(xh.rows());
    Eigen::MatrixXd d_z(xh.rows(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double m1 = d_xh.col(b).sum() / n;
      const double m2 = d_xh.col(b).dot(xh.col(b)) / n;
      d_z.col(b) = c.inv_std[static_cast<std::size_t>(l)](b) *
                   (d_xh.col(b).array() - m1 - xh.col(b).array() * m2).matrix();
    }
    const Eigen::MatrixXd& x = l == 0 ? c.input : c.trunk_out[static_cast<std::size_t>(l - 1)];
    put_dense(kTrunk0 + l, d_z, x);
    if (l > 0) d_h = p.weight(kTrunk0 + l).transpose() * d_z;
  }
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g(i))) {
      throw Error("non-finite gradient in " + p.layout.describe(static_cast<std::size_t>(i)));
    }
  }
  return g;
}

LossValue supervised_loss(const Prediction& pred, const std::vector<const SampleTuple*>& batch,
                          const SupervisedWeights& w) {
  const Eigen::Index nb = pred.deformation.cols();
  if (static_cast<Eigen::Index>(batch.size()) != nb) throw Error("batch size does not match the prediction");
  LossValue out;
  out.grad.deformation = Eigen::MatrixXd::Zero(pred.deformation.rows(), nb);
  out.grad.camera = Eigen::MatrixXd::Zero(kCameraOutputs, nb);
  const double inv_b = 1.0 / static_cast<double>(nb);
  for (Eigen::Index b = 0; b < nb; ++b) {
    const SampleTuple& s = *batch[static_cast<std::size_t>(b)];
    if (s.domain != Domain::Synthetic || !s.deformation || !s.camera) {
      throw Error("supervised loss needs labeled synthetic samples (pseudo-real labels are sealed)");
    }
    const Points3& d = s.deformation->offsets();
    if (3 * d.rows() != pred.deformation.rows()) throw Error("label deformation does not match the model");
    const Eigen::Map<const Eigen::VectorXd> target(d.data(), 3 * d.rows());
    const Eigen::VectorXd r = pred.deformation.col(b) - target;
    out.value += inv_b * w.deformation * r.squaredNorm();
    out.grad.deformation.col(b) = 2.0 * inv_b * w.deformation * r;
    const auto truth = s.camera->to_array();
    for (int i = 0; i < 6; ++i) {
      double e = pred.camera(i, b) - truth[static_cast<std::size_t>(i)];
      if (i < 3) e = wrap_angle(e);
      out.value += inv_b * w.camera * e * e;
      out.grad.camera(i, b) = 2.0 * inv_b * w.camera * e;
    }
  }
  return out;
}

double loss_supervised(const ModelParams& params, const std::vector<SampleTuple>& batch, const SupervisedWeights& w) {
  const auto ptrs = pointers(batch);
  return supervised_loss(forward(params, encode_batch(ptrs)), ptrs, w).value;
}

std::vector<const SampleTuple*> pointers(const std::vector<SampleTuple>& batch) {
  std::vector<const SampleTuple*> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(&s);
  return out;
}

BatchStream::BatchStream(const Dataset& data, std::vector<int> indices, int batch_size, const AugmentConfig& augment,
                         std::uint64_t seed)
    : data_(&data),
      tmpl_(&cloth_template(data.garment())),
      perm_(std::move(indices)),
      batch_size_(batch_size),
      augment_(augment),
      order_(mix_seed(seed, 0x5f1)),
      aug_rng_(mix_seed(seed, 0xa09)) {
  if (perm_.empty()) throw Error("no training samples");
  if (batch_size < 1) throw Error("batch size must be positive");
  cursor_ = perm_.size();
}

int BatchStream::batches_per_epoch() const {
  return static_cast<int>((perm_.size() + static_cast<std::size_t>(batch_size_) - 1) / static_cast<std::size_t>(batch_size_));
}

std::vector<SampleTuple> BatchStream::next() {
  if (cursor_ >= perm_.size()) {
    for (std::size_t i = perm_.size(); i > 1; --i) std::swap(perm_[i - 1], perm_[order_.index(i)]);
    cursor_ = 0;
    ++epoch_;
  }
  const std::size_t end = std::min(perm_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  std::vector<SampleTuple> batch;
  batch.reserve(end - cursor_);
  for (; cursor_ < end; ++cursor_) {
    batch.push_back(augment(data_->sample(perm_[cursor_]), sample_augmentation(augment_, aug_rng_), *tmpl_));
  }
  return batch;
}

double supervised_step(ModelParams& params, const std::vector<SampleTuple>& batch, const TrainConfig& cfg,
                       std::size_t step) {
  const auto ptrs = pointers(batch);
  const Prediction pred = forward(params, encode_batch(ptrs));
  const LossValue loss = supervised_loss(pred, ptrs, cfg.weights);
  if (!std::isfinite(loss.value) || loss.value > cfg.divergence_threshold) {
    std::ostringstream msg;
    msg << "training diverged at step " << step << ": loss " << loss.value << " (threshold "
        << cfg.divergence_threshold << ", lr " << cfg.learning_rate << ", batch " << batch.size() << ")";
    throw Error(msg.str());
  }
  params.values -= cfg.learning_rate * backward(params, pred, loss.grad);
  return loss.value;
}

TrainResult train_supervised(ModelParams params, const Dataset& data, const std::vector<int>& indices,
                             const TrainConfig& cfg, const ProgressSink& log) {
  if (data.domain() != Domain::Synthetic) throw Error("supervised training needs a synthetic dataset");
  if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.learning_rate > 0)) throw Error("bad training configuration");
  const ClothTemplate& tmpl = cloth_template(data.garment());
  if (params.layout.cloth_vertices != tmpl.vertex_count() || params.layout.body_points != data.body_points()) {
    throw Error("model dimensions do not match the dataset template");
  }
  TrainResult result{std::move(params), {}};
  BatchStream stream(data, indices, cfg.batch_size, cfg.augment, cfg.seed);
  const int steps = stream.batches_per_epoch();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int s = 0; s < steps; ++s) {
      const double loss = supervised_step(result.params, stream.next(), cfg, result.loss_curve.size());
      result.loss_curve.push_back(loss);
      epoch_loss += loss;
    }
    if (log) {
      std::ostringstream msg;
      msg << "epoch " << epoch + 1 << "/" << cfg.epochs << " mean L_s " << epoch_loss / steps;
      log(msg.str());
    }
  }
  return result;
}

std::vector<std::uint8_t> serialize_weights(const ModelParams& params, GarmentKind garment) {
  const ModelLayout& l = params.layout;
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(garment));
  w.u32(static_cast<std::uint32_t>(l.cloth_vertices));
  w.u32(static_cast<std::uint32_t>(l.body_points));
  // tensors in declaration order: (rows, cols) pairs
  std::vector<std::pair<std::size_t, std::pair<int, int>>> tensors;
  for (int t = 0; t < kTrunkLayers; ++t) {
    const DenseSlot& d = l.dense[static_cast<std::size_t>(t)];
    tensors.push_back({d.weight, {d.out, d.in}});
    tensors.push_back({d.bias, {d.out, 1}});
    const NormSlot& n = l.norm[static_cast<std::size_t>(t)];
    tensors.push_back({n.gain, {n.width, 1}});
    tensors.push_back({n.shift, {n.width, 1}});
  }
  for (std::size_t d = kTrunkLayers; d < l.dense.size(); ++d) {
    tensors.push_back({l.dense[d].weight, {l.dense[d].out, l.dense[d].in}});
    tensors.push_back({l.dense[d].bias, {l.dense[d].out, 1}});
  }
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.u32(static_cast<std::uint32_t>(t.second.first));
    w.u32(static_cast<std::uint32_t>(t.second.second));
  }
  for (const auto& t : tensors) {
    const std::size_t n = static_cast<std::size_t>(t.second.first) * static_cast<std::size_t>(t.second.second);
    for (std::size_t i = 0; i < n; ++i) w.f64(params.values(static_cast<Eigen::Index>(t.first + i)));
  }
  return w.buffer();
}

std::pair<ModelParams, GarmentKind> deserialize_weights(std::vector<std::uint8_t> bytes, const std::string& name) {
  ByteReader r(std::move(bytes), name);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw Error(name + ": not a CRWT weights file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw Error(name + ": unsupported CRWT version " + std::to_string(version));
  const std::uint32_t garment_id = r.u32();
  if (garment_id > 2) throw Error(name + ": bad garment id " + std::to_string(garment_id));
  const int m = static_cast<int>(r.u32());
  const int ms = static_cast<int>(r.u32());
  ModelParams params{ModelLayout(m, ms)};
  const std::uint32_t count = r.u32();
  const ModelParams reference = params;
  const std::vector<std::uint8_t> expected = serialize_weights(reference, static_cast<GarmentKind>(garment_id));
  // The header prefix (everything before the tensor data) must match the
  // architecture implied by (M, M_s).
  const std::size_t prefix = 24 + 8 * static_cast<std::size_t>(count);
  if (expected.size() != r.size() || prefix > expected.size()) {
    throw Error(name + ": size does not match a model with M=" + std::to_string(m) + ", M_s=" + std::to_string(ms));
  }
  for (std::uint32_t t = 0; t < count; ++t) {
    r.u32();
    r.u32();
  }
  std::vector<std::uint8_t> head(prefix);
  r.seek(0);
  r.bytes(head.data(), prefix);
  if (!std::equal(head.begin(), head.end(), expected.begin())) {
    throw Error(name + ": layer dimensions do not match the architecture");
  }
  // Tensor data follows in the same order the writer used.
  const ModelLayout& l = params.layout;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (int t = 0; t < kTrunkLayers; ++t) {
    const DenseSlot& d = l.dense[static_cast<std::size_t>(t)];
    spans.push_back({d.weight, static_cast<std::size_t>(d.out) * d.in});
    spans.push_back({d.bias, static_cast<std::size_t>(d.out)});
    const NormSlot& n = l.norm[static_cast<std::size_t>(t)];
    spans.push_back({n.gain, static_cast<std::size_t>(n.width)});
    spans.push_back({n.shift, static_cast<std::size_t>(n.width)});
  }
  for (std::size_t d = kTrunkLayers; d < l.dense.size(); ++d) {
    spans.push_back({l.dense[d].weight, static_cast<std::size_t>(l.dense[d].out) * l.dense[d].in});
    spans.push_back({l.dense[d].bias, static_cast<std::size_t>(l.dense[d].out)});
  }
  for (const auto& [off, n] : spans) {
    for (std::size_t i = 0; i < n; ++i) params.values(static_cast<Eigen::Index>(off + i)) = r.f64();
  }
  params.check_finite(name);
  return {std::move(params), static_cast<GarmentKind>(garment_id)};
}

void save_weights(const ModelParams& params, GarmentKind garment, const std::filesystem::path& path) {
  ByteWriter w;
  const auto bytes = serialize_weights(params, garment);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

std::pair<ModelParams, GarmentKind> load_weights(const std::filesystem::path& path) {
  ByteReader r = ByteReader::open(path);
  std::vector<std::uint8_t> bytes(r.size());
  if (!bytes.empty()) r.bytes(bytes.data(), bytes.size());
  return deserialize_weights(std::move(bytes), path.string());
}

}  // namespace clothret
