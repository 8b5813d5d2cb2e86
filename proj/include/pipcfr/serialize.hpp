#pragma once

#include <string>

#include "pipcfr/nets.hpp"

namespace pipcfr {

// Versioned JSON checkpoint with every parameter array, the layer specs, the
// fitted scaler, and the method selector. Doubles are emitted in shortest
// round-trip form, so save -> load reproduces predictions bit-exactly on one
// platform.
std::string bundle_to_json(const ModelBundle& b);
ModelBundle bundle_from_json(const std::string& text);

void save_bundle(const ModelBundle& b, const std::string& path);
ModelBundle load_bundle(const std::string& path);

}  // namespace pipcfr
