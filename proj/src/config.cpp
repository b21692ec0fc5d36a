#include "rltm/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "rltm/rng.hpp"

namespace rltm {

static const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      // paths
      {"docs", ""},
      {"queries", ""},
      {"train_queries", ""},
      {"val_queries", ""},
      {"test_queries", ""},
      {"qrels", ""},
      {"vocab", ""},
      {"checkpoint", ""},
      {"ground_truth", ""},
      {"out", ""},
      // model
      {"matcher", "knrm"},
      {"embed_dim", "128"},
      {"hidden_dim", "128"},
      {"kernels", "11"},
      {"conv_maps", "128"},
      {"conv_kh", "2"},
      {"conv_kw", "4"},
      {"pool_rows", "4"},
      {"pool_cols", "8"},
      {"query_cap", "16"},
      {"sentence_len_cap", "64"},
      {"sentence_cap", "64"},
      {"K", "5"},
      {"share_embeddings", "true"},
      // vocabulary
      {"vocab_max_size", "65536"},
      // training
      {"mode", "rltm"},
      {"batch_size", "32"},
      {"lr", "0.001"},
      {"lr_grid", ""},
      {"adam_beta1", "0.9"},
      {"adam_beta2", "0.999"},
      {"adam_epsilon", "1e-8"},
      {"clip_norm", "5"},
      {"margin", "0"},
      {"reward_baseline", "false"},
      {"baseline_decay", "0.99"},
      {"pretrain_selector_steps", "200"},
      {"pretrain_matcher_steps", "200"},
      {"joint_steps", "600"},
      {"val_interval", "100"},
      {"sample_with_replacement", "false"},
      {"freeze_selector_embeddings", "false"},
      {"triple_budget", "10"},
      {"seed", "1"},
      // synthetic corpus
      {"synth_background_tokens", "2000"},
      {"synth_query_tokens", "500"},
      {"synth_train_queries", "100"},
      {"synth_val_queries", "20"},
      {"synth_test_queries", "20"},
      {"synth_grades", "4,3,2,1,0,0,0,0,0,0"},
      {"synth_sentences_per_doc", "16"},
      {"synth_sentence_len", "12"},
      {"synth_query_len", "4"},
      {"synth_title_len", "4"},
      {"synth_plant_fraction", "1.0"},
      {"synth_confuser_rate", "0"},
      // evaluation
      {"eval_mode", "topk"},
      {"scorer", "neural"},
      {"ndcg_log_base", "2"},
      {"map_threshold", "2"},
      {"bm25_k1", "1.2"},
      {"bm25_b", "0.75"},
      // benchmark
      {"bench_batches", "32,64,128"},
      {"bench_doc_sentences", "40"},
      {"bench_sentence_len", "50"},
      {"bench_title_len", "8"},
      {"bench_query_len", "4"},
      {"bench_k", "3"},
      {"bench_reps", "20"},
      {"bench_warmup", "3"},
      {"bench_vocab", "5000"},
      {"bench_embed_dim", "64"},
      {"bench_hidden_dim", "64"},
      {"bench_conv_maps", "64"},
      // grad-check subcommand
      {"gradcheck_seeds", "20"},
      {"gradcheck_probes", "8"},
      // misc
      {"threads", "1"},
  };
  return defaults;
}

RunConfig::RunConfig() : values_(default_values()) {
  if (const char* env_seed = std::getenv("RLTM_SEED")) {
    values_["seed"] = env_seed;
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open: " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.resize(hash_pos);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      const size_t x = s.find_first_not_of(" \t");
      const size_t y = s.find_last_not_of(" \t");
      s = x == std::string::npos ? "" : s.substr(x, y - x + 1);
    };
    strip(key);
    strip(value);
    set(key, value);
  }
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int64_t RunConfig::integer(const std::string& key) const {
  const std::string& s = str(key);
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' must be an integer, got '" + s + "'");
  }
}

size_t RunConfig::size(const std::string& key) const {
  const int64_t v = integer(key);
  if (v < 0) throw ConfigError("config: '" + key + "' must be >= 0");
  return static_cast<size_t>(v);
}

uint64_t RunConfig::u64(const std::string& key) const {
  const std::string& s = str(key);
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' must be an unsigned integer, got '" + s + "'");
  }
}

double RunConfig::number(const std::string& key) const {
  const std::string& s = str(key);
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' must be a number, got '" + s + "'");
  }
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& s = str(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config: '" + key + "' must be a boolean, got '" + s + "'");
}

template <typename T, typename Parse>
static std::vector<T> parse_list(const std::string& key, const std::string& s, Parse parse) {
  std::vector<T> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(parse(item));
    } catch (const std::exception&) {
      throw ConfigError("config: bad list item '" + item + "' in '" + key + "'");
    }
  }
  return out;
}

std::vector<size_t> RunConfig::size_list(const std::string& key) const {
  return parse_list<size_t>(key, str(key), [](const std::string& s) {
    const long long v = std::stoll(s);
    if (v < 0) throw std::invalid_argument(s);
    return static_cast<size_t>(v);
  });
}

std::vector<double> RunConfig::number_list(const std::string& key) const {
  return parse_list<double>(key, str(key), [](const std::string& s) { return std::stod(s); });
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
  return parse_list<int>(key, str(key),
                         [](const std::string& s) { return static_cast<int>(std::stoll(s)); });
}

void RunConfig::validate() const {
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  const std::string& matcher = str("matcher");
  require(matcher == "knrm" || matcher == "matchpyramid", "matcher must be knrm or matchpyramid");
  const std::string& mode = str("mode");
  require(mode == "rltm" || mode == "pipeline" || mode == "fulldoc",
          "mode must be rltm, pipeline or fulldoc");
  const std::string& eval_mode = str("eval_mode");
  require(eval_mode == "topk" || eval_mode == "sampled" || eval_mode == "fulldoc" ||
              eval_mode == "firstk" || eval_mode == "random",
          "eval_mode must be one of topk, sampled, fulldoc, firstk, random");
  const std::string& scorer = str("scorer");
  require(scorer == "neural" || scorer == "bm25", "scorer must be neural or bm25");

  for (const char* key : {"embed_dim", "hidden_dim", "kernels", "conv_maps", "conv_kh", "conv_kw",
                          "pool_rows", "pool_cols", "query_cap", "sentence_len_cap", "sentence_cap",
                          "K", "batch_size", "synth_sentences_per_doc", "synth_sentence_len",
                          "synth_query_len", "synth_title_len", "bench_sentence_len", "bench_k"}) {
    require(size(key) >= 1, std::string(key) + " must be >= 1");
  }
  require(size("vocab_max_size") >= 3, "vocab_max_size must be >= 3");
  require(number("lr") > 0, "lr must be > 0");
  for (double lr : number_list("lr_grid")) require(lr > 0, "lr_grid entries must be > 0");
  require(number("adam_beta1") >= 0 && number("adam_beta1") < 1, "adam_beta1 must be in [0,1)");
  require(number("adam_beta2") >= 0 && number("adam_beta2") < 1, "adam_beta2 must be in [0,1)");
  require(number("adam_epsilon") > 0, "adam_epsilon must be > 0");
  require(number("clip_norm") >= 0, "clip_norm must be >= 0");
  require(number("margin") >= 0, "margin must be >= 0");
  require(number("baseline_decay") >= 0 && number("baseline_decay") < 1,
          "baseline_decay must be in [0,1)");
  require(number("synth_plant_fraction") >= 0.5 && number("synth_plant_fraction") <= 1.0,
          "synth_plant_fraction must be in [0.5, 1]");
  require(number("synth_confuser_rate") >= 0.0 && number("synth_confuser_rate") <= 1.0,
          "synth_confuser_rate must be in [0, 1]");
  for (int g : int_list("synth_grades")) require(g >= 0 && g <= 4, "synth_grades must be in [0,4]");
  require(integer("map_threshold") >= 1 && integer("map_threshold") <= 4,
          "map_threshold must be in [1,4]");
  require(number("ndcg_log_base") > 1, "ndcg_log_base must be > 1");
  require(number("bm25_k1") > 0, "bm25_k1 must be > 0");
  require(number("bm25_b") >= 0 && number("bm25_b") <= 1, "bm25_b must be in [0,1]");
  require(size("threads") >= 1, "threads must be >= 1");
  require(!size_list("bench_batches").empty(), "bench_batches must be non-empty");
  require(!size_list("bench_doc_sentences").empty(), "bench_doc_sentences must be non-empty");
}

static bool is_path_key(const std::string& key) {
  static const std::set<std::string> path_keys = {
      "docs",  "queries", "train_queries", "val_queries",  "test_queries",
      "qrels", "vocab",   "checkpoint",    "ground_truth", "out"};
  return path_keys.count(key) > 0;
}

// Hash over the semantic knobs only: two runs that differ just in where files
// live produce identical artifacts.
uint64_t RunConfig::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, value] : values_) {
    if (is_path_key(key)) continue;
    h = fnv1a(key.data(), key.size(), h);
    h = fnv1a("=", 1, h);
    h = fnv1a(value.data(), value.size(), h);
    h = fnv1a("\n", 1, h);
  }
  return h;
}

void RunConfig::write_echo(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("config: cannot write echo: " + path);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "# rltm-config v1\n# config_hash=%016llx\n# seed=%llu\n",
                static_cast<unsigned long long>(hash()),
                static_cast<unsigned long long>(seed()));
  out << buf;
  for (const auto& [key, value] : values_) out << key << "=" << value << "\n";
}

}  // namespace rltm
