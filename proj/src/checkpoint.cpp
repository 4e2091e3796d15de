#include "wean/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>

namespace wean {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'W', 'E', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return {{"generator", to_string(c.generator)},
          {"relevance", to_string(c.relevance)},
          {"attention", to_string(c.attention)},
          {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers},
          {"hidden_size", c.hidden_size},
          {"embedding_size", c.embedding_size},
          {"dropout", c.dropout},
          {"init_range", c.init_range}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.generator = parse_generator_kind(j.at("generator").get<std::string>());
  c.relevance = parse_score_kind(j.at("relevance").get<std::string>());
  c.attention = parse_score_kind(j.at("attention").get<std::string>());
  c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
  c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
  c.hidden_size = j.at("hidden_size").get<std::size_t>();
  c.embedding_size = j.at("embedding_size").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.init_range = j.at("init_range").get<double>();
  return c;
}

template <class T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_raw(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw CheckpointError("truncated checkpoint");
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model, TokenizeMode tokenize) {
  const auto params = model.parameters();
  json header;
  header["config"] = config_to_json(model.config());
  header["tokenize"] = to_string(tokenize);
  header["vocabulary"] = {{"tokens", model.vocab().tokens()}, {"frequencies", model.vocab().frequencies()}};
  header["candidates"] = model.candidates().ids();
  json tensors = json::array();
  for (const auto& p : params) tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  // Write to a sibling file and rename so readers never see a partial file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_raw(out, kVersion);
    write_raw(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) {
      const auto values = p.tensor.values();
      out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    }
    if (!out) throw CheckpointError("error while writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  const auto version = read_raw<std::uint32_t>(in);
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto header_bytes = read_raw<std::uint64_t>(in);
  std::string text(header_bytes, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_bytes))) throw CheckpointError("truncated checkpoint");

  try {
    const json header = json::parse(text);
    const ModelConfig config = config_from_json(header.at("config"));
    const TokenizeMode tokenize = parse_tokenize_mode(header.at("tokenize").get<std::string>());
    auto vocab = std::make_shared<const Vocabulary>(
        Vocabulary::from_tokens(header.at("vocabulary").at("tokens").get<std::vector<std::string>>(),
                                header.at("vocabulary").at("frequencies").get<std::vector<std::size_t>>()));
    auto candidates =
        CandidateSet::from_ids(header.at("candidates").get<std::vector<TokenId>>(), vocab->size());
    Seq2SeqModel model(config, vocab, std::move(candidates), 0);

    std::map<std::string, Tensor> by_name;
    for (auto& p : model.parameters()) by_name.emplace(p.name, p.tensor);
    const auto& listed = header.at("tensors");
    if (listed.size() != by_name.size()) throw CheckpointError("checkpoint tensor list does not match the model");
    for (const auto& entry : listed) {
      const auto name = entry.at("name").get<std::string>();
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw CheckpointError("unexpected tensor '" + name + "' in checkpoint");
      Tensor target = it->second;
      if (entry.at("shape").get<Shape>() != target.shape()) {
        throw CheckpointError("tensor '" + name + "' has the wrong shape");
      }
      auto values = target.mutable_values();
      if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()))) {
        throw CheckpointError("truncated checkpoint data for '" + name + "'");
      }
    }
    return {std::move(model), tokenize};
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint header: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError("invalid checkpoint: " + std::string(e.what()));
  } catch (const std::logic_error& e) {
    throw CheckpointError("invalid checkpoint: " + std::string(e.what()));
  }
}

}  // namespace wean
