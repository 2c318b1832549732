#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "socnav/binary_io.hpp"
#include "socnav/nn.hpp"

namespace socnav {

/// Framed checkpoint: one JSON header frame (with a "parameters" shape list
/// appended) followed by one frame per parameter, in list order.
void write_checkpoint(const std::string& path, std::uint32_t magic, std::uint32_t version,
                      const nlohmann::json& header, const nn::ParameterList& params);

nlohmann::json read_checkpoint_header(io::FrameReader& reader);

/// Fills `params` in order; names and shapes must match exactly.
void read_checkpoint_params(io::FrameReader& reader, const nn::ParameterList& params);

}  // namespace socnav
