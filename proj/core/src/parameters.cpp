#include "wimp/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "wimp/error.hpp"

namespace wimp {

int ParameterStore::add(const std::string& name, ad::Tensor value) {
  if (index_.count(name)) throw Error(ErrorCode::kInvalidConfig, "duplicate parameter " + name);
  const int id = static_cast<int>(entries_.size());
  ad::Tensor zeros(value.shape(), 0.0);
  entries_.push_back({name, std::move(value), zeros, zeros});
  index_[name] = id;
  return id;
}

int ParameterStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::kInvalidConfig, "unknown parameter " + name);
  return it->second;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool operator==(const ParameterStore& a, const ParameterStore& b) {
  if (a.step_ != b.step_ || a.entries_.size() != b.entries_.size() || a.metadata_ != b.metadata_) {
    return false;
  }
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || !(x.value == y.value) || !(x.m == y.m) || !(x.v == y.v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

GradientBuffer::GradientBuffer(const ParameterStore& store) {
  grads_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    grads_.emplace_back(store.value(static_cast<int>(i)).size(), 0.0);
  }
}

void GradientBuffer::accumulate(const ad::Tape& tape, double weight) {
  for (const auto& pg : tape.parameter_gradients()) {
    auto& dst = grads_.at(pg.param_id);
    for (std::size_t i = 0; i < pg.grad.size(); ++i) dst[i] += weight * pg.grad[i];
  }
}

void GradientBuffer::add(const GradientBuffer& other) {
  for (std::size_t p = 0; p < grads_.size(); ++p) {
    for (std::size_t i = 0; i < grads_[p].size(); ++i) grads_[p][i] += other.grads_[p][i];
  }
}

void GradientBuffer::scale(double s) {
  for (auto& g : grads_)
    for (auto& v : g) v *= s;
}

void GradientBuffer::zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
}

double GradientBuffer::global_norm() const {
  double s = 0.0;
  for (const auto& g : grads_)
    for (double v : g) s += v * v;
  return std::sqrt(s);
}

double AdamOptimizer::step(ParameterStore& store, GradientBuffer& grads, double lr,
                           double clip_norm) const {
  const double norm = grads.global_norm();
  if (clip_norm > 0.0 && norm > clip_norm) grads.scale(clip_norm / norm);
  ++store.step_;
  const double t = static_cast<double>(store.step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t p = 0; p < store.entries_.size(); ++p) {
    auto& e = store.entries_[p];
    const auto& g = grads.at(static_cast<int>(p));
    for (std::size_t i = 0; i < g.size(); ++i) {
      e.m[i] = config_.beta1 * e.m[i] + (1.0 - config_.beta1) * g[i];
      e.v[i] = config_.beta2 * e.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Checkpoint encoding

namespace {

constexpr char kMagic[8] = {'W', 'I', 'M', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_record(std::vector<std::uint8_t>& out, const std::string& name, const ad::Tensor& t) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::pair<std::string, ad::Tensor> get_record() {
    const auto len = get<std::uint32_t>();
    std::string name = get_string(len);
    const auto rank = get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorCode::kCheckpointFormat, "implausible rank for " + name);
    std::vector<std::size_t> shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<std::size_t>(get<std::uint64_t>()));
      count *= shape.back();
    }
    need(count * 8);
    std::vector<double> vals(count);
    for (auto& v : vals) v = std::bit_cast<double>(get<std::uint64_t>());
    return {std::move(name), ad::Tensor(std::move(shape), std::move(vals))};
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::kCheckpointFormat, "truncated checkpoint");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParameterStore& store, std::vector<std::uint8_t>& out) {
  out.clear();
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);

  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.entries_.size()));
  for (const auto& e : store.entries_) put_record(out, e.name, e.value);

  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(2 * store.entries_.size() + 1));
  for (const auto& e : store.entries_) {
    put_record(out, e.name + "/adam_m", e.m);
    put_record(out, e.name + "/adam_v", e.v);
  }
  put_record(out, "adam/step", ad::Tensor::scalar(static_cast<double>(store.step_)));

  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.metadata_.size()));
  for (const auto& [name, t] : store.metadata_) put_record(out, name, t);
}

ParameterStore load_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.get_string(8) != std::string(kMagic, 8)) {
    throw Error(ErrorCode::kCheckpointFormat, "bad magic, not a WIMPCKPT file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kCheckpointFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  ParameterStore store;
  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto [name, t] = r.get_record();
    store.add(name, std::move(t));
  }
  const auto n_opt = r.get<std::uint32_t>();
  if (n_opt != 2 * n_params + 1) {
    throw Error(ErrorCode::kCheckpointFormat, "optimizer section does not match parameters");
  }
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto& e = store.entries_[i];
    auto [mname, m] = r.get_record();
    auto [vname, v] = r.get_record();
    if (mname != e.name + "/adam_m" || vname != e.name + "/adam_v" || m.shape() != e.value.shape() ||
        v.shape() != e.value.shape()) {
      throw Error(ErrorCode::kCheckpointFormat, "optimizer state mismatch for " + e.name);
    }
    e.m = std::move(m);
    e.v = std::move(v);
  }
  auto [sname, step] = r.get_record();
  if (sname != "adam/step" || step.size() != 1) {
    throw Error(ErrorCode::kCheckpointFormat, "missing adam/step record");
  }
  store.step_ = static_cast<std::uint64_t>(step[0]);
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto [name, t] = r.get_record();
    store.metadata_[name] = std::move(t);
  }
  if (!r.done()) throw Error(ErrorCode::kCheckpointFormat, "trailing bytes after checkpoint");
  return store;
}

void save_checkpoint_file(const ParameterStore& store, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  save_checkpoint(store, bytes);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

ParameterStore load_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return load_checkpoint(bytes);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void fill_uniform(ad::Tensor& t, double bound, std::mt19937_64& rng) {
  for (auto& v : t.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
}

}  // namespace wimp
