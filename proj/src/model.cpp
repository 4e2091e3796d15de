#include "wean/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace wean {
namespace {

constexpr double kMaskedScore = -1e30;
constexpr std::uint64_t kHeadStream = 0x9E3779B97F4A7C15ULL;

}  // namespace

std::string to_string(GeneratorKind kind) { return kind == GeneratorKind::kWean ? "wean" : "softmax_linear"; }

GeneratorKind parse_generator_kind(const std::string& name) {
  if (name == "wean") return GeneratorKind::kWean;
  if (name == "softmax_linear") return GeneratorKind::kSoftmaxLinear;
  throw std::invalid_argument("unknown generator '" + name + "' (expected wean or softmax_linear)");
}

void ModelConfig::validate() const {
  if (hidden_size == 0) throw std::invalid_argument("hidden_size must be positive");
  if (embedding_size == 0) throw std::invalid_argument("embedding_size must be positive");
  if (encoder_layers == 0) throw std::invalid_argument("encoder_layers must be positive");
  if (decoder_layers == 0) throw std::invalid_argument("decoder_layers must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (!(init_range > 0.0)) throw std::invalid_argument("init_range must be positive");
  if (generator == GeneratorKind::kWean && relevance == ScoreKind::kDot && embedding_size != hidden_size) {
    throw std::invalid_argument("embedding_size must equal hidden_size for dot scoring");
  }
}

CandidateSet CandidateSet::all(const Vocabulary& vocab) {
  std::vector<TokenId> ids(vocab.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return from_ids(std::move(ids), vocab.size());
}

CandidateSet CandidateSet::most_frequent(const Vocabulary& vocab, std::size_t n) {
  // Vocabulary ids past the specials are already in frequency order.
  const std::size_t count = std::min(vocab.size(), kNumSpecials + n);
  std::vector<TokenId> ids(count);
  for (std::size_t i = 0; i < count; ++i) ids[i] = i;
  return from_ids(std::move(ids), vocab.size());
}

CandidateSet CandidateSet::from_ids(std::vector<TokenId> ids, std::size_t vocab_size) {
  if (ids.size() < kNumSpecials) throw ContractError("a candidate set must contain the special tokens");
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (ids[i] != i) throw ContractError("candidate slots 0-3 must hold the special tokens in id order");
  }
  CandidateSet set;
  set.slots_.assign(vocab_size, kMissing);
  for (std::size_t slot = 0; slot < ids.size(); ++slot) {
    if (ids[slot] >= vocab_size) {
      throw IndexError("candidate word " + std::to_string(ids[slot]) + " outside vocabulary of " +
                       std::to_string(vocab_size));
    }
    if (set.slots_[ids[slot]] != kMissing) {
      throw ContractError("duplicate candidate word " + std::to_string(ids[slot]));
    }
    set.slots_[ids[slot]] = slot;
  }
  set.identity_ = ids.size() == vocab_size;
  for (std::size_t i = 0; set.identity_ && i < ids.size(); ++i) set.identity_ = ids[i] == i;
  set.ids_ = std::move(ids);
  return set;
}

std::size_t CandidateSet::slot_of(TokenId word) const { return contains(word) ? slots_[word] : kUnkId; }

GeneratorHead::GeneratorHead(GeneratorKind kind, ScoreKind relevance, std::size_t hidden_size,
                             std::size_t embedding_size, std::size_t vocab_size)
    : query_projection(Tensor::zeros({hidden_size, 2 * hidden_size}, true)),
      kind_(kind),
      relevance_(relevance),
      hidden_size_(hidden_size),
      embedding_size_(embedding_size) {
  if (kind == GeneratorKind::kSoftmaxLinear) {
    output_weights = Tensor::zeros({vocab_size, hidden_size}, true);
    return;
  }
  switch (relevance) {
    case ScoreKind::kDot:
      if (hidden_size != embedding_size) {
        throw DimensionError("dot relevance needs embedding size " + std::to_string(embedding_size) +
                             " to equal hidden size " + std::to_string(hidden_size));
      }
      break;
    case ScoreKind::kGeneral:
      relevance_weight = Tensor::zeros({hidden_size, embedding_size}, true);
      break;
    case ScoreKind::kConcat:
      query_weight = Tensor::zeros({hidden_size, hidden_size}, true);
      value_weight = Tensor::zeros({hidden_size, embedding_size}, true);
      energy = Tensor::zeros({hidden_size}, true);
      break;
  }
}

void GeneratorHead::initialize_shared(double range, Rng& rng) {
  query_projection = uniform_parameter(query_projection.shape(), range, rng);
}

void GeneratorHead::initialize_own(double range, Rng& rng) {
  if (kind_ == GeneratorKind::kSoftmaxLinear) {
    output_weights = uniform_parameter(output_weights.shape(), range, rng);
    return;
  }
  if (relevance_ == ScoreKind::kGeneral) relevance_weight = uniform_parameter(relevance_weight.shape(), range, rng);
  if (relevance_ == ScoreKind::kConcat) {
    query_weight = uniform_parameter(query_weight.shape(), range, rng);
    value_weight = uniform_parameter(value_weight.shape(), range, rng);
    energy = uniform_parameter(energy.shape(), range, rng);
  }
}

Tensor GeneratorHead::attentional_state(const Tensor& s, const Tensor& c) const {
  return tanh(matmul_nt(concat(s, c, 1), query_projection));
}

Tensor GeneratorHead::make_query(const Tensor& s, const Tensor& c) const {
  if (kind_ != GeneratorKind::kWean) throw ContractError("make_query on a softmax_linear generator");
  return attentional_state(s, c);
}

Tensor GeneratorHead::relevance(const Tensor& query, const Tensor& candidates) const {
  if (candidates.rank() != 2 || candidates.dim(0) == 0) {
    throw ContractError("relevance needs at least one candidate, got " + shape_string(candidates.shape()));
  }
  if (candidates.dim(1) != embedding_size_) {
    throw DimensionError("candidate embeddings " + shape_string(candidates.shape()) + " do not have width " +
                         std::to_string(embedding_size_));
  }
  switch (relevance_) {
    case ScoreKind::kDot:
      if (query.dim(1) != candidates.dim(1)) {
        throw DimensionError("dot relevance: query " + shape_string(query.shape()) + " vs embeddings " +
                             shape_string(candidates.shape()));
      }
      return matmul_nt(query, candidates);
    case ScoreKind::kGeneral:
      return matmul_nt(matmul(query, relevance_weight), candidates);
    case ScoreKind::kConcat: {
      const std::size_t batch = query.dim(0), count = candidates.dim(0);
      const Tensor hidden = tanh(pairwise_add(matmul_nt(query, query_weight), matmul_nt(candidates, value_weight)));
      const Tensor flat = matmul(reshape(hidden, {batch * count, hidden_size_}), reshape(energy, {hidden_size_, 1}));
      return reshape(flat, {batch, count});
    }
  }
  throw ContractError("unknown relevance function");
}

Tensor GeneratorHead::scores(const Tensor& s, const Tensor& c, const Tensor& candidate_values) const {
  const Tensor attended = attentional_state(s, c);
  if (kind_ == GeneratorKind::kSoftmaxLinear) return matmul_nt(attended, output_weights);
  return relevance(attended, candidate_values);
}

void GeneratorHead::collect_parameters(std::vector<Parameter>& out) const {
  out.push_back({"head.query_projection", query_projection});
  if (kind_ == GeneratorKind::kSoftmaxLinear) {
    out.push_back({"head.output_weights", output_weights});
    return;
  }
  if (relevance_ == ScoreKind::kGeneral) out.push_back({"head.relevance_weight", relevance_weight});
  if (relevance_ == ScoreKind::kConcat) {
    out.push_back({"head.query_weight", query_weight});
    out.push_back({"head.value_weight", value_weight});
    out.push_back({"head.energy", energy});
  }
}

std::uint64_t count_output_params(GeneratorKind kind, ScoreKind relevance, std::uint64_t vocab_size,
                                  std::uint64_t hidden_size) {
  if (kind == GeneratorKind::kSoftmaxLinear) return vocab_size * hidden_size;
  switch (relevance) {
    case ScoreKind::kDot:
      return 0;
    case ScoreKind::kGeneral:
      return hidden_size * hidden_size;
    case ScoreKind::kConcat:
      return 2 * hidden_size * hidden_size + hidden_size;
  }
  return 0;
}

Seq2SeqModel::Seq2SeqModel(ModelConfig config, std::shared_ptr<const Vocabulary> vocab, CandidateSet candidates,
                           std::uint64_t seed)
    : embedding(Tensor::zeros({vocab->size(), config.embedding_size}, true)),
      config_(config),
      vocab_(std::move(vocab)),
      candidates_(std::move(candidates)),
      encoder_(config.embedding_size, config.hidden_size, config.encoder_layers),
      decoder_(config.embedding_size, config.hidden_size, config.decoder_layers),
      attention_(config.attention, config.hidden_size, config.hidden_size),
      head_(config.generator, config.relevance, config.hidden_size, config.embedding_size, vocab_->size()) {
  config_.validate();
  if (candidates_.ids().empty() || candidates_.ids().back() >= vocab_->size()) {
    throw ContractError("candidate set does not fit the vocabulary");
  }
  if (config_.generator == GeneratorKind::kSoftmaxLinear && !candidates_.is_identity()) {
    throw ContractError("the softmax_linear generator scores the whole vocabulary");
  }
  // Shared parameters come from one stream and head-specific ones from
  // another, so both generator variants start from the same shared weights.
  Rng shared(seed);
  embedding = uniform_parameter(embedding.shape(), config_.init_range, shared);
  encoder_.initialize(config_.init_range, shared);
  decoder_.initialize(config_.init_range, shared);
  attention_.initialize(config_.init_range, shared);
  head_.initialize_shared(config_.init_range, shared);
  Rng own(seed ^ kHeadStream);
  head_.initialize_own(config_.init_range, own);
}

Seq2SeqModel::EncodedSource Seq2SeqModel::encode_batch(std::span<const TokenId> source, std::size_t batch,
                                                       std::size_t width, std::span<const std::size_t> lengths,
                                                       RunMode mode, Rng* rng) const {
  if (batch == 0 || width == 0) throw ContractError("encode needs a non-empty source");
  if (source.size() != batch * width || lengths.size() != batch) {
    throw DimensionError("encode: " + std::to_string(source.size()) + " ids and " +
                         std::to_string(lengths.size()) + " lengths for a " + std::to_string(batch) + "x" +
                         std::to_string(width) + " batch");
  }
  for (auto len : lengths) {
    if (len == 0 || len > width) throw ContractError("encode: source length must lie in [1, width]");
  }
  auto state = encoder_.zero_state(batch);
  std::vector<Tensor> outputs;
  outputs.reserve(width);
  std::vector<TokenId> column(batch);
  std::vector<unsigned char> live(batch);
  std::vector<double> mask(batch * width, 0.0);
  for (std::size_t t = 0; t < width; ++t) {
    bool all_live = true;
    for (std::size_t b = 0; b < batch; ++b) {
      column[b] = source[b * width + t];
      live[b] = t < lengths[b];
      all_live = all_live && live[b];
      if (!live[b]) mask[b * width + t] = kMaskedScore;
    }
    auto next = encoder_.step(embed(column), state, config_.dropout, mode, rng);
    if (!all_live) {
      // Rows past their length keep their final state.
      for (std::size_t l = 0; l < next.size(); ++l) {
        next[l].h = select_rows(live, next[l].h, state[l].h);
        next[l].c = select_rows(live, next[l].c, state[l].c);
      }
    }
    state = std::move(next);
    outputs.push_back(state.back().h);
  }
  EncodedSource encoded;
  encoded.states = stack_steps(outputs);
  encoded.prepared = attention_.prepare(encoded.states);
  bool padded = false;
  for (auto len : lengths) padded = padded || len < width;
  if (padded) encoded.mask = Tensor::from({batch, width}, std::move(mask));
  encoded.final_state = std::move(state);
  return encoded;
}

Tensor Seq2SeqModel::encode(std::span<const TokenId> source) const {
  if (source.empty()) throw ContractError("encode on an empty source");
  const std::size_t lengths[] = {source.size()};
  const auto encoded = encode_batch(source, 1, source.size(), lengths, RunMode::kEval, nullptr);
  return reshape(encoded.states, {source.size(), config_.hidden_size});
}

std::vector<LstmState> Seq2SeqModel::initial_decoder_state(const EncodedSource& encoded) const {
  // Decoder layers are aligned with the top encoder layers; any extra
  // decoder layers below them start from zero.
  const std::size_t enc = encoded.final_state.size(), dec = decoder_.layers();
  const std::size_t batch = encoded.states.dim(0);
  std::vector<LstmState> state = decoder_.zero_state(batch);
  for (std::size_t j = 0; j < dec; ++j) {
    if (j + enc >= dec) state[j] = encoded.final_state[enc - dec + j];
  }
  return state;
}

Seq2SeqModel::DecodeStep Seq2SeqModel::decode_step(const Tensor& prev_value, std::span<const LstmState> state,
                                                   const EncodedSource& encoded, RunMode mode, Rng* rng) const {
  auto next = decoder_.step(prev_value, state, config_.dropout, mode, rng);
  Tensor s = next.back().h;
  auto attended = attention_.attend(s, encoded.states, encoded.prepared, encoded.mask);
  return {std::move(s), std::move(attended.context), std::move(next)};
}

Tensor Seq2SeqModel::candidate_values() const {
  if (candidates_.is_identity()) return embedding;
  return gather_rows(embedding, candidates_.ids());
}

Tensor Seq2SeqModel::embed(std::span<const TokenId> ids) const { return gather_rows(embedding, ids); }

Tensor Seq2SeqModel::output_scores(const Tensor& s, const Tensor& c, const Tensor& values, RunMode mode,
                                   Rng* rng) const {
  return head_.scores(dropout(s, config_.dropout, mode, rng), c, values);
}

Tensor Seq2SeqModel::word_distribution(const Tensor& s, const Tensor& c) const {
  return softmax(output_scores(s, c, candidate_values(), RunMode::kEval, nullptr));
}

std::pair<TokenId, Tensor> Seq2SeqModel::select_word(std::span<const double> distribution) const {
  if (distribution.size() != candidates_.size()) {
    throw DimensionError("distribution over " + std::to_string(distribution.size()) + " slots, expected " +
                         std::to_string(candidates_.size()));
  }
  const auto best = static_cast<std::size_t>(
      std::distance(distribution.begin(), std::max_element(distribution.begin(), distribution.end())));
  const TokenId word = candidates_.word(best);
  NoGradGuard no_grad;
  const TokenId ids[] = {word};
  return {word, gather_rows(embedding, ids)};
}

std::vector<Parameter> Seq2SeqModel::parameters() const {
  std::vector<Parameter> out;
  out.push_back({"embedding", embedding});
  encoder_.collect_parameters("encoder", out);
  decoder_.collect_parameters("decoder", out);
  attention_.collect_parameters("attention", out);
  head_.collect_parameters(out);
  return out;
}

std::vector<Tensor> Seq2SeqModel::parameter_tensors() const {
  std::vector<Tensor> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

std::size_t Seq2SeqModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

}  // namespace wean
