#include "tdpmix/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tdpmix/data.hpp"

namespace tdpmix {

namespace {

constexpr char kMagic[8] = {'T', 'D', 'P', 'M', 'I', 'X', 'C', 'K'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void vec(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : in_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(b[k]);
    return v;
  }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(b[k]);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > remaining()) throw FormatError("checkpoint: string length exceeds the data");
    return std::string(take(n));
  }
  Vector vec() {
    const std::uint64_t n = u64();
    if (n > remaining() / 8) throw FormatError("checkpoint: vector length exceeds the data");
    Vector v(n);
    for (double& x : v) x = f64();
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view take(std::size_t n) {
    if (n > remaining()) throw FormatError("checkpoint: truncated data");
    const auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

FamilyShape shape_of(const Model& model) {
  FamilyShape shape;
  if (const auto* affine = dynamic_cast<const AffineImage*>(&model.family())) {
    shape.width = affine->width();
    shape.height = affine->height();
  }
  if (const auto* curve = dynamic_cast<const CurveWarp*>(&model.family())) {
    shape.amplitude_scale = curve->amplitude_scale();
  }
  return shape;
}

void write_transform(Writer& w, const TransformPriorStats& t) {
  w.vec(t.prior_a());
  w.vec(t.prior_b());
  w.i64(t.count());
  w.vec(t.sumsq());
}

TransformPriorStats read_transform(Reader& r) {
  Vector a = r.vec();
  Vector b = r.vec();
  const std::int64_t count = r.i64();
  Vector ss = r.vec();
  return TransformPriorStats::from_fields(std::move(a), std::move(b), count, std::move(ss));
}

void write_data(Writer& w, const DataStats& d) {
  if (const auto* b = std::get_if<BernoulliStats>(&d.impl())) {
    w.u8(0);
    w.f64(b->prior().a);
    w.f64(b->prior().b);
    w.i64(b->count());
    w.vec(b->ones());
  } else {
    const auto& g = std::get<DiagGaussianStats>(d.impl());
    w.u8(1);
    w.vec(g.mu0());
    w.f64(g.kappa0());
    w.f64(g.a0());
    w.f64(g.b0());
    w.i64(g.count());
    w.vec(g.sum());
    w.vec(g.sumsq());
  }
}

DataStats read_data(Reader& r) {
  const std::uint8_t tag = r.u8();
  if (tag == 0) {
    BernoulliPrior prior;
    prior.a = r.f64();
    prior.b = r.f64();
    const std::int64_t count = r.i64();
    return BernoulliStats::from_fields(prior, count, r.vec());
  }
  if (tag == 1) {
    Vector mu0 = r.vec();
    const double kappa0 = r.f64();
    const double a0 = r.f64();
    const double b0 = r.f64();
    const std::int64_t count = r.i64();
    Vector sum = r.vec();
    Vector sumsq = r.vec();
    return DiagGaussianStats::from_fields(std::move(mu0), kappa0, a0, b0, count, std::move(sum),
                                          std::move(sumsq));
  }
  throw FormatError("checkpoint: unknown statistics tag " + std::to_string(tag));
}

// Bounds on header fields, so damaged files fail before allocating.
constexpr int kMaxSide = 1 << 14;
constexpr std::uint64_t kMaxDim = 1u << 24;

}  // namespace

std::string checkpoint_save(const JACState& state) {
  const Model& model = *state.model;
  const FamilyShape shape = shape_of(model);
  const Hyperparams& h = model.hyper();

  Writer w;
  w.str(model.family().name());
  w.i64(shape.width);
  w.i64(shape.height);
  w.f64(shape.amplitude_scale);
  w.vec(model.family().scale_hints());
  w.u8(static_cast<std::uint8_t>(model.kind()));
  w.u64(model.data_dim());
  w.str(model.features().name);

  w.f64(h.bernoulli.a);
  w.f64(h.bernoulli.b);
  w.f64(h.gaussian.mu0);
  w.f64(h.gaussian.kappa0);
  w.f64(h.gaussian.a0);
  w.f64(h.gaussian.b0);
  w.f64(h.transform_a);
  w.f64(h.transform_prior_scale);
  w.vec(h.transform_b);
  w.f64(h.gamma_shape);
  w.f64(h.gamma_rate);

  w.f64(state.gamma);
  w.f64(state.gamma_shape);
  w.f64(state.gamma_rate);
  w.i64(state.next_id);
  w.i64(state.iteration);
  w.u64(state.clusters.size());
  for (const auto& [id, c] : state.clusters) {
    w.i64(id);
    w.i64(c.member_count);
    w.u8(c.locked ? 1 : 0);
    write_data(w, c.stats.data);
    write_transform(w, c.stats.transform);
  }

  Writer out;
  out.bytes().append(kMagic, sizeof kMagic);
  out.u32(kCheckpointVersion);
  out.u64(w.bytes().size());
  out.bytes() += w.bytes();
  return std::move(out.bytes());
}

JACState checkpoint_load(std::string_view bytes, std::vector<DataItem> items, std::uint64_t seed) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a tdpmix checkpoint");
  }
  Reader head(bytes.substr(sizeof kMagic));
  const std::uint32_t version = head.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (want " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t length = head.u64();
  if (length != head.remaining()) throw FormatError("checkpoint: payload length mismatch");
  Reader r(bytes.substr(bytes.size() - length));

  const std::string family_name = r.str();
  FamilyShape shape;
  shape.width = static_cast<int>(r.i64());
  shape.height = static_cast<int>(r.i64());
  shape.amplitude_scale = r.f64();
  const Vector hints = r.vec();
  const std::uint8_t kind_tag = r.u8();
  if (kind_tag > static_cast<std::uint8_t>(DataKind::images)) {
    throw FormatError("checkpoint: unknown data kind");
  }
  const auto kind = static_cast<DataKind>(kind_tag);
  const std::uint64_t data_dim = r.u64();
  const std::string feature_name = r.str();

  Hyperparams h;
  h.bernoulli.a = r.f64();
  h.bernoulli.b = r.f64();
  h.gaussian.mu0 = r.f64();
  h.gaussian.kappa0 = r.f64();
  h.gaussian.a0 = r.f64();
  h.gaussian.b0 = r.f64();
  h.transform_a = r.f64();
  h.transform_prior_scale = r.f64();
  h.transform_b = r.vec();
  h.gamma_shape = r.f64();
  h.gamma_rate = r.f64();

  if (shape.width < 0 || shape.height < 0 || shape.width > kMaxSide || shape.height > kMaxSide) {
    throw FormatError("checkpoint: corrupt image shape");
  }
  if (data_dim == 0 || data_dim > kMaxDim) throw FormatError("checkpoint: corrupt data dimension");
  if (kind == DataKind::points2d && data_dim != 2) {
    throw FormatError("checkpoint: points must have dimension 2");
  }
  if (kind == DataKind::images && shape.width > 0 &&
      data_dim != static_cast<std::uint64_t>(shape.width) * shape.height) {
    throw FormatError("checkpoint: image shape does not match the data dimension");
  }

  ModelPtr model;
  try {
    FamilyPtr family = make_family(family_name, shape);
    const auto built = family->scale_hints();
    if (!std::equal(built.begin(), built.end(), hints.begin(), hints.end())) {
      throw FormatError("checkpoint: family '" + family_name + "' does not rebuild identically");
    }
    int width = shape.width;
    int height = shape.height;
    if (kind == DataKind::images && width == 0 && !items.empty()) {
      width = items.front().width;
      height = items.front().height;
    }
    FeatureMap features = feature_map_by_name(feature_name, kind, width, height);
    model = std::make_shared<const Model>(std::move(family), kind, data_dim, h,
                                          std::move(features));
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint: cannot rebuild the model: ") + e.what());
  }
  for (const DataItem& item : items) {
    if (item.kind != kind || item.size() != data_dim) {
      throw DimensionError("checkpoint: new items do not match the saved model");
    }
  }

  const double gamma = r.f64();
  JACState state = make_jac_state(model, std::move(items), gamma, seed, InitMode::unassigned);
  state.gamma_shape = r.f64();
  state.gamma_rate = r.f64();
  state.next_id = static_cast<int>(r.i64());
  state.iteration = r.i64();
  const std::uint64_t k = r.u64();
  if (k > r.remaining()) throw FormatError("checkpoint: cluster count exceeds the data");
  for (std::uint64_t c = 0; c < k; ++c) {
    const int id = static_cast<int>(r.i64());
    const std::int64_t members = r.i64();
    const bool locked = r.u8() != 0;
    std::optional<DataStats> data;
    std::optional<TransformPriorStats> transform;
    try {
      data = read_data(r);
      transform = read_transform(r);
    } catch (const DimensionError& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    } catch (const DomainError& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
    if (data->dim() != model->stats_dim() || transform->dim() != model->family().dim()) {
      throw FormatError("checkpoint: cluster statistics have the wrong dimension");
    }
    if (members < 0 || id < 0 || id >= state.next_id || state.clusters.contains(id)) {
      throw FormatError("checkpoint: corrupt cluster header");
    }
    ComponentStats stats{std::move(*data), std::move(*transform)};
    Cluster cl{id, stats, members, members, locked, stats, std::nullopt, std::nullopt};
    state.clusters.emplace(id, std::move(cl));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return state;
}

void save_checkpoint_file(const JACState& state, const std::filesystem::path& path) {
  const std::string bytes = checkpoint_save(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

JACState load_checkpoint_file(const std::filesystem::path& path, std::vector<DataItem> items,
                              std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_load(buf.str(), std::move(items), seed);
}

bool same_clusters(const JACState& a, const JACState& b) {
  if (std::bit_cast<std::uint64_t>(a.gamma) != std::bit_cast<std::uint64_t>(b.gamma)) return false;
  if (a.clusters.size() != b.clusters.size()) return false;
  for (auto ia = a.clusters.begin(), ib = b.clusters.begin(); ia != a.clusters.end(); ++ia, ++ib) {
    const Cluster& x = ia->second;
    const Cluster& y = ib->second;
    if (ia->first != ib->first || x.member_count != y.member_count || x.locked != y.locked) {
      return false;
    }
    if (!x.stats.data.same_fields(y.stats.data) ||
        !x.stats.transform.same_fields(y.stats.transform)) {
      return false;
    }
  }
  return true;
}

}  // namespace tdpmix
