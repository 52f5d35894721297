#ifndef JNR_CHECKPOINT_HPP_
#define JNR_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "jnr/model.hpp"

namespace jnr {

/// Everything a checkpoint file carries besides the model itself.
struct CheckpointMeta {
  std::int64_t iteration = 0;
  std::optional<LossWeights> loss_weights;
};

/// File layout: the line "JNRCKPT 1", a line holding the byte length of a
/// JSON header, the header (config, class set, metadata, dtype, parameter
/// names and shapes), then the raw little-endian parameter values in header
/// order at the stored dtype.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const JerseyNet<Scalar>& net,
                     const CheckpointMeta& meta);

/// Loads a checkpoint written at either precision; values are converted to
/// Scalar. Throws InputError on malformed files.
template <typename Scalar>
JerseyNet<Scalar> load_checkpoint(const std::filesystem::path& path,
                                  CheckpointMeta* meta = nullptr);

std::string backbone_to_json(const BackboneConfig& cfg);
BackboneConfig backbone_from_json(const std::string& json);

}  // namespace jnr

#endif  // JNR_CHECKPOINT_HPP_
