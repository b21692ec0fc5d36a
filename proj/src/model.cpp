#include "rltm/model.hpp"

#include <cstring>
#include <fstream>

#include "rltm/rng.hpp"

namespace rltm {

MatcherKind matcher_kind_from_string(const std::string& s) {
  if (s == "knrm") return MatcherKind::knrm;
  if (s == "matchpyramid") return MatcherKind::matchpyramid;
  throw ConfigError("unknown matcher '" + s + "' (expected knrm or matchpyramid)");
}

std::string to_string(MatcherKind kind) {
  return kind == MatcherKind::knrm ? "knrm" : "matchpyramid";
}

KernelBank KernelBank::make(size_t count) {
  if (count < 2) throw ConfigError("kernel bank needs at least 2 kernels");
  KernelBank bank;
  bank.mus.push_back(1.0);
  bank.sigmas.push_back(1e-3);
  const real width = static_cast<real>(2.0 / static_cast<double>(count - 1));
  for (size_t k = 1; k < count; ++k) {
    bank.mus.push_back(static_cast<real>(1.0 - width / 2 - static_cast<double>(k - 1) * width));
    bank.sigmas.push_back(width / 2);
  }
  return bank;
}

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("model: vocab_size too small");
  if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("model: dims must be >= 1");
  if (query_cap < 1 || sentence_len_cap < 1 || sentence_cap < 1) {
    throw ConfigError("model: caps must be >= 1");
  }
  if (k_sentences < 1) throw ConfigError("model: K must be >= 1");
  if (matcher == MatcherKind::knrm) {
    if (kernel_count < 2) throw ConfigError("model: kernel_count must be >= 2");
  } else {
    if (conv_kh > query_cap || conv_kw > sentence_len_cap) {
      throw ConfigError("model: convolution window exceeds matrix caps");
    }
    const size_t oh = query_cap - conv_kh + 1, ow = sentence_len_cap - conv_kw + 1;
    if (pool_rows > oh || pool_cols > ow) {
      throw ConfigError("model: pooling grid larger than convolution output");
    }
    if (conv_maps < 1) throw ConfigError("model: conv_maps must be >= 1");
  }
}

static void init_uniform(Tensor& t, Rng& rng) {
  for (auto& x : t.v) x = static_cast<real>(rng.uniform(-0.05, 0.05));
}

Model Model::create(const ModelConfig& cfg, uint64_t init_seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.bank = KernelBank::make(cfg.kernel_count);

  m.embeddings = ParamTensor("embeddings", {cfg.vocab_size, cfg.embed_dim});
  if (!cfg.share_embeddings) {
    m.sel_embeddings = ParamTensor("sel_embeddings", {cfg.vocab_size, cfg.embed_dim});
  }
  m.sel_Wq = ParamTensor("sel_Wq", {cfg.hidden_dim, cfg.embed_dim});
  m.sel_bq = ParamTensor("sel_bq", {cfg.hidden_dim});
  m.sel_Wu = ParamTensor("sel_Wu", {cfg.hidden_dim, cfg.embed_dim});
  m.sel_bu = ParamTensor("sel_bu", {cfg.hidden_dim});

  if (cfg.matcher == MatcherKind::knrm) {
    m.knrm_w = ParamTensor("knrm_w", {1, cfg.kernel_count});
    m.knrm_b = ParamTensor("knrm_b", {1});
  } else {
    m.conv_kernels = ParamTensor("conv_kernels", {cfg.conv_maps, cfg.conv_kh, cfg.conv_kw});
    m.conv_bias = ParamTensor("conv_bias", {cfg.conv_maps});
    const size_t pooled = cfg.conv_maps * cfg.pool_rows * cfg.pool_cols;
    m.mp_W1 = ParamTensor("mp_W1", {cfg.hidden_dim, pooled});
    m.mp_b1 = ParamTensor("mp_b1", {cfg.hidden_dim});
    m.mp_W2 = ParamTensor("mp_W2", {1, cfg.hidden_dim});
    m.mp_b2 = ParamTensor("mp_b2", {1});
  }

  // Weight init is uniform(-0.05, 0.05); biases stay zero. Fixed draw order
  // keeps checkpoints reproducible for a given seed.
  Rng rng(init_seed);
  init_uniform(m.embeddings.value, rng);
  if (!cfg.share_embeddings) init_uniform(m.sel_embeddings.value, rng);
  init_uniform(m.sel_Wq.value, rng);
  init_uniform(m.sel_Wu.value, rng);
  if (cfg.matcher == MatcherKind::knrm) {
    init_uniform(m.knrm_w.value, rng);
  } else {
    init_uniform(m.conv_kernels.value, rng);
    init_uniform(m.mp_W1.value, rng);
    init_uniform(m.mp_W2.value, rng);
  }
  return m;
}

std::vector<ParamTensor*> Model::params() {
  std::vector<ParamTensor*> ps{&embeddings};
  if (!cfg.share_embeddings) ps.push_back(&sel_embeddings);
  ps.insert(ps.end(), {&sel_Wq, &sel_bq, &sel_Wu, &sel_bu});
  if (cfg.matcher == MatcherKind::knrm) {
    ps.insert(ps.end(), {&knrm_w, &knrm_b});
  } else {
    ps.insert(ps.end(), {&conv_kernels, &conv_bias, &mp_W1, &mp_b1, &mp_W2, &mp_b2});
  }
  return ps;
}

std::vector<ParamTensor*> Model::selector_params(bool include_embeddings) {
  std::vector<ParamTensor*> ps{&sel_Wq, &sel_bq, &sel_Wu, &sel_bu};
  if (include_embeddings) ps.push_back(&selector_embeddings());
  return ps;
}

std::vector<ParamTensor*> Model::matcher_params(bool include_embeddings) {
  std::vector<ParamTensor*> ps;
  if (cfg.matcher == MatcherKind::knrm) {
    ps = {&knrm_w, &knrm_b};
  } else {
    ps = {&conv_kernels, &conv_bias, &mp_W1, &mp_b1, &mp_W2, &mp_b2};
  }
  if (include_embeddings) ps.push_back(&embeddings);
  return ps;
}

void Model::zero_grads() {
  for (ParamTensor* p : params()) p->zero_grad();
}

// --- checkpoint --------------------------------------------------------------

static constexpr char kMagic[8] = {'R', 'L', 'T', 'M', 'C', 'K', 'P', '1'};

namespace {

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw DataError("checkpoint: cannot open for writing: " + path);
  }
  void bytes(const void* p, size_t n) { out.write(static_cast<const char*>(p), n); }
  void u32(uint32_t x) { bytes(&x, 4); }
  void u64(uint64_t x) { bytes(&x, 8); }
  void f64(double x) { bytes(&x, 8); }
};

struct Reader {
  std::ifstream in;
  std::string path;
  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw DataError("checkpoint: cannot open: " + p);
  }
  void bytes(void* p, size_t n) {
    in.read(static_cast<char*>(p), n);
    if (!in) throw DataError("checkpoint: truncated file: " + path);
  }
  uint32_t u32() {
    uint32_t x;
    bytes(&x, 4);
    return x;
  }
  uint64_t u64() {
    uint64_t x;
    bytes(&x, 8);
    return x;
  }
  double f64() {
    double x;
    bytes(&x, 8);
    return x;
  }
};

}  // namespace

static void write_tensor(Writer& w, const ParamTensor& p) {
  if (!p.value.all_finite()) {
    throw NumericError("checkpoint: non-finite values in tensor '" + p.name + "'");
  }
  w.u32(static_cast<uint32_t>(p.name.size()));
  w.bytes(p.name.data(), p.name.size());
  w.u32(static_cast<uint32_t>(p.value.rank()));
  for (size_t d : p.value.shape) w.u64(d);
  for (real x : p.value.v) w.f64(static_cast<double>(x));
}

void save_checkpoint(const std::string& path, const Model& model, uint64_t vocab_hash,
                     uint64_t config_hash, uint64_t seed) {
  Writer w(path);
  w.bytes(kMagic, sizeof(kMagic));
  w.u64(config_hash);
  w.u64(seed);
  w.u64(vocab_hash);
  const ModelConfig& c = model.cfg;
  w.u32(c.matcher == MatcherKind::knrm ? 0 : 1);
  for (size_t d : {c.vocab_size, c.embed_dim, c.hidden_dim, c.kernel_count, c.conv_maps, c.conv_kh,
                   c.conv_kw, c.pool_rows, c.pool_cols, c.query_cap, c.sentence_len_cap,
                   c.sentence_cap, c.k_sentences}) {
    w.u64(d);
  }
  w.u32(c.share_embeddings ? 1 : 0);

  auto& m = const_cast<Model&>(model);
  const auto params = m.params();
  w.u32(static_cast<uint32_t>(params.size()));
  for (const ParamTensor* p : params) write_tensor(w, *p);
  if (!w.out) throw DataError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path, uint64_t expected_vocab_hash) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw DataError("checkpoint: bad magic: " + path);

  Checkpoint ckpt;
  ckpt.config_hash = r.u64();
  ckpt.seed = r.u64();
  ckpt.vocab_hash = r.u64();
  if (expected_vocab_hash != 0 && ckpt.vocab_hash != expected_vocab_hash) {
    throw DataError("checkpoint: vocabulary hash mismatch: " + path);
  }

  ModelConfig c;
  c.matcher = r.u32() == 0 ? MatcherKind::knrm : MatcherKind::matchpyramid;
  c.vocab_size = r.u64();
  c.embed_dim = r.u64();
  c.hidden_dim = r.u64();
  c.kernel_count = r.u64();
  c.conv_maps = r.u64();
  c.conv_kh = r.u64();
  c.conv_kw = r.u64();
  c.pool_rows = r.u64();
  c.pool_cols = r.u64();
  c.query_cap = r.u64();
  c.sentence_len_cap = r.u64();
  c.sentence_cap = r.u64();
  c.k_sentences = r.u64();
  c.share_embeddings = r.u32() != 0;

  ckpt.model = Model::create(c, /*init_seed=*/0);
  auto params = ckpt.model.params();
  const uint32_t n = r.u32();
  if (n != params.size()) throw DataError("checkpoint: tensor count mismatch: " + path);
  for (ParamTensor* p : params) {
    const uint32_t name_len = r.u32();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    if (name != p->name) throw DataError("checkpoint: unexpected tensor '" + name + "'");
    const uint32_t rank = r.u32();
    if (rank != p->value.rank()) throw DataError("checkpoint: rank mismatch for '" + name + "'");
    for (size_t d = 0; d < rank; ++d) {
      if (r.u64() != p->value.shape[d]) {
        throw DataError("checkpoint: shape mismatch for '" + name + "'");
      }
    }
    for (real& x : p->value.v) x = static_cast<real>(r.f64());
  }
  return ckpt;
}

}  // namespace rltm
