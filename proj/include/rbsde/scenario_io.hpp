#ifndef RBSDE_SCENARIO_IO_HPP
#define RBSDE_SCENARIO_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "rbsde/model.hpp"

namespace rbsde {

/// Parses, shape-checks and validator-checks a scenario file. Parse problems
/// raise InvalidInput naming the offending field; validator failures raise
/// InvalidInput carrying the witness sample.
Scenario load_scenario(const std::filesystem::path& path);

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& sc);

/// FNV-1a 64 over the canonical (key-sorted) serialization; stable across
/// runs for identical content. Custom (non-serializable) callables make a
/// scenario unfingerprintable and raise InvalidInput.
std::uint64_t fingerprint(const Scenario& sc);
std::string fingerprint_hex(const Scenario& sc);

}  // namespace rbsde

#endif  // RBSDE_SCENARIO_IO_HPP
