#include "lcmlai/config.hpp"

#include <array>
#include <utility>

#include <json.hpp>

namespace lcmlai {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 9> kVariants{{
    {Variant::kFull, "full"},
    {Variant::kNoAia, "no_aia"},
    {Variant::kNoLim, "no_lim"},
    {Variant::kNoBim, "no_bim"},
    {Variant::kOnlyAia, "only_aia"},
    {Variant::kLimNoAia, "lim_no_aia"},
    {Variant::kLegalUnit, "legal_unit"},
    {Variant::kLegalRandom, "legal_random"},
    {Variant::kLegalEmbeddingDistance, "legal_embedding_distance"},
}};

using nlohmann::json;

template <typename T>
T get_as(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

json model_json(const ModelConfig& m) {
  json j;
  j["d_b"] = m.d_b;
  j["d_h"] = m.d_h;
  j["d_s"] = m.d_s;
  j["d_l"] = m.d_l;
  j["tau_a"] = m.tau_a;
  j["tau_m"] = m.tau_m;
  j["max_sentences"] = m.max_sentences;
  j["max_tokens"] = m.max_tokens;
  j["variant"] = std::string(to_string(m.variant));
  j["learning_rate"] = m.learning_rate;
  j["weight_decay"] = m.weight_decay;
  j["batch_size"] = m.batch_size;
  j["epochs"] = m.epochs;
  j["seed"] = m.seed;
  j["folds"] = m.folds;
  j["enable_rationale"] = m.enable_rationale;
  j["enable_align"] = m.enable_align;
  j["teacher_forcing"] = m.teacher_forcing;
  j["symmetric_eval"] = m.symmetric_eval;
  j["relevant_min_grade"] = m.relevant_min_grade ? json(*m.relevant_min_grade) : json(nullptr);
  j["ndcg_gain"] = m.ndcg_gain == Gain::kExponential ? "exponential" : "linear";
  return j;
}

// Returns false when `key` is not a model key.
bool apply_model_key(ModelConfig& m, const std::string& key, const json& v) {
  if (key == "d_b") m.d_b = get_as<Index>(v, key);
  else if (key == "d_h") m.d_h = get_as<Index>(v, key);
  else if (key == "d_s") m.d_s = get_as<Index>(v, key);
  else if (key == "d_l") m.d_l = get_as<Index>(v, key);
  else if (key == "tau_a") m.tau_a = get_as<double>(v, key);
  else if (key == "tau_m") m.tau_m = get_as<double>(v, key);
  else if (key == "max_sentences") m.max_sentences = get_as<int>(v, key);
  else if (key == "max_tokens") m.max_tokens = get_as<int>(v, key);
  else if (key == "variant") m.variant = parse_variant(get_as<std::string>(v, key));
  else if (key == "learning_rate") m.learning_rate = get_as<double>(v, key);
  else if (key == "weight_decay") m.weight_decay = get_as<double>(v, key);
  else if (key == "batch_size") m.batch_size = get_as<int>(v, key);
  else if (key == "epochs") m.epochs = get_as<int>(v, key);
  else if (key == "seed") m.seed = get_as<std::uint64_t>(v, key);
  else if (key == "folds") m.folds = get_as<int>(v, key);
  else if (key == "enable_rationale") m.enable_rationale = get_as<bool>(v, key);
  else if (key == "enable_align") m.enable_align = get_as<bool>(v, key);
  else if (key == "teacher_forcing") m.teacher_forcing = get_as<bool>(v, key);
  else if (key == "symmetric_eval") m.symmetric_eval = get_as<bool>(v, key);
  else if (key == "relevant_min_grade") {
    if (v.is_null()) m.relevant_min_grade.reset();
    else m.relevant_min_grade = get_as<int>(v, key);
  } else if (key == "ndcg_gain") {
    const auto g = get_as<std::string>(v, key);
    if (g == "exponential") m.ndcg_gain = Gain::kExponential;
    else if (g == "linear") m.ndcg_gain = Gain::kLinear;
    else throw ConfigError("ndcg_gain must be 'exponential' or 'linear'");
  } else {
    return false;
  }
  return true;
}

}  // namespace

Variant parse_variant(std::string_view tag) {
  for (const auto& [v, name] : kVariants) {
    if (name == tag) return v;
  }
  throw ConfigError("unknown variant '" + std::string(tag) + "'");
}

std::string_view to_string(Variant v) {
  for (const auto& [value, name] : kVariants) {
    if (value == v) return name;
  }
  return "full";
}

heads::Components components_of(Variant v) {
  switch (v) {
    case Variant::kNoAia: return {true, true, false};
    case Variant::kNoLim: return {true, false, false};
    case Variant::kNoBim: return {false, true, true};
    case Variant::kOnlyAia: return {false, false, true};
    case Variant::kLimNoAia: return {false, true, false};
    default: return {true, true, true};
  }
}

Task parse_task(std::string_view tag) {
  if (tag == "lcr") return Task::kRetrieval;
  if (tag == "lcm") return Task::kMatching;
  throw ConfigError("unknown task '" + std::string(tag) + "' (expected lcr or lcm)");
}

std::string_view to_string(Task t) { return t == Task::kRetrieval ? "lcr" : "lcm"; }

void ModelConfig::validate() const {
  if (d_b < 2 || d_h < 1 || d_s < 2 || d_l < 2) throw ConfigError("dimensions must be positive (d_b >= 2)");
  if (d_b % 2 != 0 || d_s % 2 != 0 || d_l % 2 != 0) {
    throw ConfigError("d_b, d_s and d_l must be even (bidirectional encoders split them per direction)");
  }
  loss_config().validate();
  if (max_sentences < 1 || max_tokens < 1) throw ConfigError("truncation limits must be positive");
  if (!(learning_rate > 0.0) || weight_decay < 0.0) throw ConfigError("invalid optimiser settings");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (folds < 2) throw ConfigError("folds must be at least 2");
}

RunConfig run_config_from_json(const std::string& text, RunConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig& c = base;
  for (const auto& [key, v] : j.items()) {
    if (apply_model_key(c.model, key, v)) continue;
    if (key == "task") c.task = parse_task(get_as<std::string>(v, key));
    else if (key == "corpus") c.corpus = get_as<std::string>(v, key);
    else if (key == "schema") c.schema = get_as<std::string>(v, key);
    else if (key == "out_dir") c.out_dir = get_as<std::string>(v, key);
    else if (key == "cache_dir") c.cache_dir = get_as<std::string>(v, key);
    else if (key == "encoder") c.encoder = get_as<std::string>(v, key);
    else if (key == "encoder_name") c.encoder_name = get_as<std::string>(v, key);
    else if (key == "min_support") c.min_support = get_as<int>(v, key);
    else if (key == "topk") c.topk = get_as<int>(v, key);
    else if (key == "jobs") c.jobs = get_as<int>(v, key);
    else if (key == "bm25_k1") c.bm25_k1 = get_as<double>(v, key);
    else if (key == "bm25_b") c.bm25_b = get_as<double>(v, key);
    else if (key == "reference_map") {
      if (v.is_null()) c.reference_map.reset();
      else c.reference_map = get_as<double>(v, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return c;
}

std::string to_json(const ModelConfig& cfg) { return model_json(cfg).dump(2); }

std::string to_json(const RunConfig& c) {
  json j = model_json(c.model);
  j["task"] = std::string(to_string(c.task));
  j["corpus"] = c.corpus;
  j["schema"] = c.schema;
  j["out_dir"] = c.out_dir;
  j["cache_dir"] = c.cache_dir;
  j["encoder"] = c.encoder;
  j["encoder_name"] = c.encoder_name;
  j["min_support"] = c.min_support;
  j["topk"] = c.topk;
  j["jobs"] = c.jobs;
  j["bm25_k1"] = c.bm25_k1;
  j["bm25_b"] = c.bm25_b;
  j["reference_map"] = c.reference_map ? json(*c.reference_map) : json(nullptr);
  return j.dump(2);
}

}  // namespace lcmlai
