#include "wean/config.hpp"

#include <fstream>

namespace wean {
namespace {

using nlohmann::json;

template <class T>
T field_as(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, "has the wrong type");
  }
}

std::size_t positive(const json& j, const std::string& key) {
  const auto v = field_as<long long>(j, key);
  if (v <= 0) throw ConfigError(key, "must be a positive integer");
  return static_cast<std::size_t>(v);
}

template <class Parse>
auto parsed(const json& j, const std::string& key, Parse parse) {
  try {
    return parse(field_as<std::string>(j, key));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "word") return c;
  if (name == "char") {
    c.model.hidden_size = 512;
    c.model.embedding_size = 512;
    c.model.encoder_layers = 2;
    c.model.decoder_layers = 1;
    c.model.dropout = 0.0;
    c.vocab_size = 4000;
    c.beam = 5;
    c.tokenize = TokenizeMode::kChar;
    return c;
  }
  throw ConfigError("preset", "unknown preset '" + name + "' (expected word or char)");
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config", "must be a JSON object");
  ExperimentConfig c = preset(j.contains("preset") ? field_as<std::string>(j, "preset") : "word");
  for (const auto& [key, value] : j.items()) {
    if (key == "preset") continue;
    if (key == "generator") {
      c.model.generator = parsed(j, key, parse_generator_kind);
    } else if (key == "score") {
      c.model.relevance = parsed(j, key, parse_score_kind);
    } else if (key == "attention") {
      c.model.attention = parsed(j, key, parse_score_kind);
    } else if (key == "layers") {
      c.model.encoder_layers = c.model.decoder_layers = positive(j, key);
    } else if (key == "encoder_layers") {
      c.model.encoder_layers = positive(j, key);
    } else if (key == "decoder_layers") {
      c.model.decoder_layers = positive(j, key);
    } else if (key == "hidden_size") {
      c.model.hidden_size = positive(j, key);
    } else if (key == "embedding_size") {
      c.model.embedding_size = positive(j, key);
    } else if (key == "dropout") {
      c.model.dropout = field_as<double>(j, key);
    } else if (key == "vocab_size") {
      c.vocab_size = positive(j, key);
    } else if (key == "candidates") {
      c.candidates = value.is_null() ? std::nullopt : std::optional<std::size_t>(positive(j, key));
    } else if (key == "batch_size") {
      c.batch_size = positive(j, key);
    } else if (key == "epochs") {
      const auto v = field_as<long long>(j, key);
      if (v < 0) throw ConfigError(key, "must not be negative");
      c.epochs = static_cast<std::size_t>(v);
    } else if (key == "clip_norm") {
      c.clip_norm = field_as<double>(j, key);
    } else if (key == "beam") {
      c.beam = positive(j, key);
    } else if (key == "learning_rate") {
      c.learning_rate = field_as<double>(j, key);
    } else if (key == "tokenize") {
      c.tokenize = parsed(j, key, parse_tokenize_mode);
    } else if (key == "seed") {
      c.seed = field_as<std::uint64_t>(j, key);
    } else if (key == "seeds") {
      c.seeds = field_as<std::vector<std::uint64_t>>(j, key);
    } else if (key == "threshold") {
      c.threshold = field_as<double>(j, key);
    } else if (key == "max_source_len") {
      c.max_source_len = positive(j, key);
    } else if (key == "max_target_len") {
      c.max_target_len = positive(j, key);
    } else if (key == "train") {
      c.train_path = field_as<std::string>(j, key);
    } else if (key == "valid") {
      c.valid_path = field_as<std::string>(j, key);
    } else if (key == "output_dir") {
      c.output_dir = field_as<std::string>(j, key);
    } else {
      throw ConfigError(key, "unknown configuration field");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json j = {{"generator", to_string(model.generator)},
            {"score", to_string(model.relevance)},
            {"attention", to_string(model.attention)},
            {"encoder_layers", model.encoder_layers},
            {"decoder_layers", model.decoder_layers},
            {"hidden_size", model.hidden_size},
            {"embedding_size", model.embedding_size},
            {"dropout", model.dropout},
            {"vocab_size", vocab_size},
            {"candidates", candidates ? json(*candidates) : json(nullptr)},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"clip_norm", clip_norm},
            {"beam", beam},
            {"learning_rate", learning_rate},
            {"tokenize", to_string(tokenize)},
            {"seed", seed},
            {"seeds", seeds},
            {"threshold", threshold},
            {"max_source_len", max_source_len},
            {"max_target_len", max_target_len}};
  if (train_path) j["train"] = train_path->string();
  if (valid_path) j["valid"] = valid_path->string();
  if (output_dir) j["output_dir"] = output_dir->string();
  return j;
}

void ExperimentConfig::validate() const {
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ConfigError("dropout", "must lie in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm", "must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");
  if (model.relevance == ScoreKind::kDot && model.embedding_size != model.hidden_size) {
    throw ConfigError("embedding_size", "must equal hidden_size when score is dot");
  }
  if (seeds.empty()) throw ConfigError("seeds", "must list at least one seed");
}

void ExperimentConfig::validate_for_training() const {
  validate();
  if (!train_path) throw ConfigError("train", "missing training corpus path");
  if (!valid_path) throw ConfigError("valid", "missing validation corpus path");
  if (!output_dir) throw ConfigError("output_dir", "missing output directory");
}

}  // namespace wean
