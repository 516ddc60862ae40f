#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "cpoison/classifier.hpp"
#include "cpoison/extractor.hpp"

namespace cpoison {

// Text checkpoint:
//
//   cpoison-checkpoint 1
//   nonlinearity relu
//   seed 42
//   dropout_prob 0.25
//   blocks 2
//   block 0 in 20 out 32 dropout 1
//   weight 32 20
//   <one matrix row per line, space separated>
//   bias 32
//   <values>
//   ...
//   head 2 16            (optional linear head)
//   weight 2 16
//   ...
//   bias 2
//   ...
//   end
//
// Values use the shortest round-trip decimal form, so load(save(m)) is
// bit-exact.
struct Checkpoint {
  FeatureExtractor extractor;
  std::optional<LinearClassifier> head;
};

std::string save_checkpoint(const Checkpoint& checkpoint);
Checkpoint load_checkpoint(std::string_view text);

void write_checkpoint_file(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint_file(const std::string& path);

}  // namespace cpoison
