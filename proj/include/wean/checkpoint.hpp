#pragma once

#include <filesystem>
#include <stdexcept>

#include "wean/model.hpp"
#include "wean/vocab.hpp"

namespace wean {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint layout (all integers little-endian):
//
//   "WEANCKPT"            8-byte magic
//   u32 version           currently 1
//   u64 header_bytes
//   header                UTF-8 JSON: model config, tokenization mode,
//                         vocabulary tokens and frequencies, candidate ids,
//                         and the ordered list of {name, shape} tensors
//   tensor data           raw IEEE-754 float64 values of each listed tensor,
//                         row-major, in header order
//
// Values are stored bit-for-bit, so save followed by load is exact.

struct LoadedCheckpoint {
  Seq2SeqModel model;
  TokenizeMode tokenize;
};

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model, TokenizeMode tokenize);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wean
