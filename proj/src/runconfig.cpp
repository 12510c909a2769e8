#include "ttc/runconfig.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ttc/common.hpp"

namespace ttc {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  TTC_REQUIRE(false, "config: key '" << key << "' expects a boolean, got '" << v << "'");
  return false;
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (...) {
      TTC_REQUIRE(false, "config: key '" << key << "' expects integers, got '" << item << "'");
    }
  }
  TTC_REQUIRE(!out.empty(), "config: key '" << key << "' has an empty list");
  return out;
}

std::string join_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

template <class T>
T parse_number(const std::string& v, const std::string& key) {
  std::stringstream ss(v);
  T out{};
  ss >> out;
  TTC_REQUIRE(!ss.fail() && ss.eof(), "config: key '" << key << "' has invalid value '" << v << "'");
  return out;
}

}  // namespace

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"batch_size", [](RunConfig& c, const std::string& v) { c.batch_size = parse_number<int>(v, "batch_size"); }},
      {"learning_rate", [](RunConfig& c, const std::string& v) { c.learning_rate = parse_number<double>(v, "learning_rate"); }},
      {"epochs_max", [](RunConfig& c, const std::string& v) { c.epochs_max = parse_number<int>(v, "epochs_max"); }},
      {"margin", [](RunConfig& c, const std::string& v) { c.margin = parse_number<double>(v, "margin"); }},
      {"lambda", [](RunConfig& c, const std::string& v) { c.lambda = parse_number<double>(v, "lambda"); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v, "seed"); }},
      {"patience", [](RunConfig& c, const std::string& v) { c.patience = parse_number<int>(v, "patience"); }},
      {"eval_every", [](RunConfig& c, const std::string& v) { c.eval_every = parse_number<int>(v, "eval_every"); }},
      {"grad_clip_norm", [](RunConfig& c, const std::string& v) { c.grad_clip_norm = parse_number<double>(v, "grad_clip_norm"); }},
      {"use_qspn", [](RunConfig& c, const std::string& v) { c.use_qspn = parse_bool(v, "use_qspn"); }},
      {"use_caption", [](RunConfig& c, const std::string& v) { c.use_caption = parse_bool(v, "use_caption"); }},
      {"use_late_fusion", [](RunConfig& c, const std::string& v) { c.use_late_fusion = parse_bool(v, "use_late_fusion"); }},
      {"freeze_proposals", [](RunConfig& c, const std::string& v) { c.freeze_proposals = parse_bool(v, "freeze_proposals"); }},
      {"embed_dim", [](RunConfig& c, const std::string& v) { c.embed_dim = parse_number<int>(v, "embed_dim"); }},
      {"hidden_dim", [](RunConfig& c, const std::string& v) { c.hidden_dim = parse_number<int>(v, "hidden_dim"); }},
      {"clip_feature_dim", [](RunConfig& c, const std::string& v) { c.clip_feature_dim = parse_number<int>(v, "clip_feature_dim"); }},
      {"fc_hidden_dim", [](RunConfig& c, const std::string& v) { c.fc_hidden_dim = parse_number<int>(v, "fc_hidden_dim"); }},
      {"conv_dim", [](RunConfig& c, const std::string& v) { c.conv_dim = parse_number<int>(v, "conv_dim"); }},
      {"late_fusion_dim", [](RunConfig& c, const std::string& v) { c.late_fusion_dim = parse_number<int>(v, "late_fusion_dim"); }},
      {"roi_bins", [](RunConfig& c, const std::string& v) { c.roi_bins = parse_number<int>(v, "roi_bins"); }},
      {"anchor_stride", [](RunConfig& c, const std::string& v) { c.anchor_stride = parse_number<int>(v, "anchor_stride"); }},
      {"anchor_scales", [](RunConfig& c, const std::string& v) { c.anchor_scales = parse_int_list(v, "anchor_scales"); }},
      {"attention_activation", [](RunConfig& c, const std::string& v) { c.attention_activation = v; }},
      {"attention_scale", [](RunConfig& c, const std::string& v) { c.attention_scale = parse_bool(v, "attention_scale"); }},
      {"sentence_pooling", [](RunConfig& c, const std::string& v) { c.sentence_pooling = v; }},
      {"min_frequency", [](RunConfig& c, const std::string& v) { c.min_frequency = parse_number<int>(v, "min_frequency"); }},
      {"max_sentence_length", [](RunConfig& c, const std::string& v) { c.max_sentence_length = parse_number<int>(v, "max_sentence_length"); }},
      {"nms_threshold", [](RunConfig& c, const std::string& v) { c.nms_threshold = parse_number<double>(v, "nms_threshold"); }},
      {"top_k_proposals", [](RunConfig& c, const std::string& v) { c.top_k_proposals = parse_number<int>(v, "top_k_proposals"); }},
      {"rank_with_objectness", [](RunConfig& c, const std::string& v) { c.rank_with_objectness = parse_bool(v, "rank_with_objectness"); }},
      {"train_manifest", [](RunConfig& c, const std::string& v) { c.train_manifest = v; }},
      {"val_manifest", [](RunConfig& c, const std::string& v) { c.val_manifest = v; }},
      {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  const auto it = setters.find(key);
  TTC_REQUIRE(it != setters.end(), "config: unknown key '" << key << "'");
  it->second(cfg, value);
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    TTC_REQUIRE(eq != std::string::npos, "config line " << lineno << ": expected key=value, got '"
                                                        << line << "'");
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  TTC_REQUIRE_IO(f.good(), "load_run_config: cannot open " << path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config_text(ss.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream o;
  o << "batch_size=" << batch_size << '\n';
  o << "learning_rate=" << learning_rate << '\n';
  o << "epochs_max=" << epochs_max << '\n';
  o << "margin=" << margin << '\n';
  o << "lambda=" << lambda << '\n';
  o << "seed=" << seed << '\n';
  o << "patience=" << patience << '\n';
  o << "eval_every=" << eval_every << '\n';
  o << "grad_clip_norm=" << grad_clip_norm << '\n';
  o << "use_qspn=" << (use_qspn ? 1 : 0) << '\n';
  o << "use_caption=" << (use_caption ? 1 : 0) << '\n';
  o << "use_late_fusion=" << (use_late_fusion ? 1 : 0) << '\n';
  o << "freeze_proposals=" << (freeze_proposals ? 1 : 0) << '\n';
  o << "embed_dim=" << embed_dim << '\n';
  o << "hidden_dim=" << hidden_dim << '\n';
  o << "clip_feature_dim=" << clip_feature_dim << '\n';
  o << "fc_hidden_dim=" << fc_hidden_dim << '\n';
  o << "conv_dim=" << conv_dim << '\n';
  o << "late_fusion_dim=" << late_fusion_dim << '\n';
  o << "roi_bins=" << roi_bins << '\n';
  o << "anchor_stride=" << anchor_stride << '\n';
  o << "anchor_scales=" << join_int_list(anchor_scales) << '\n';
  o << "attention_activation=" << attention_activation << '\n';
  o << "attention_scale=" << (attention_scale ? 1 : 0) << '\n';
  o << "sentence_pooling=" << sentence_pooling << '\n';
  o << "min_frequency=" << min_frequency << '\n';
  o << "max_sentence_length=" << max_sentence_length << '\n';
  o << "nms_threshold=" << nms_threshold << '\n';
  o << "top_k_proposals=" << top_k_proposals << '\n';
  o << "rank_with_objectness=" << (rank_with_objectness ? 1 : 0) << '\n';
  o << "train_manifest=" << train_manifest << '\n';
  o << "val_manifest=" << val_manifest << '\n';
  o << "out_dir=" << out_dir << '\n';
  return o.str();
}

std::string RunConfig::digest() const {
  const std::string s = serialize();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  TTC_REQUIRE_IO(f.good(), "save_run_config: cannot open " << path);
  f << cfg.serialize();
  TTC_REQUIRE_IO(f.good(), "save_run_config: write failed for " << path);
}

}  // namespace ttc
