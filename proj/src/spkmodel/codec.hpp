#pragma once

#include <cstdint>
#include <string>

#include "binio.hpp"
#include "uapforge/spkmodel/model.hpp"

namespace uapforge::spkmodel {

// In-memory form of the checkpoint, reused by the training checkpoint.
std::string encode_model(const SpeakerModel& model, std::uint32_t version = kModelFormatVersion);
LoadedModel decode_model(binio::Reader& r);

}  // namespace uapforge::spkmodel
