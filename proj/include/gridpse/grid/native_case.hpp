#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "gridpse/grid/network.hpp"
#include "gridpse/measurement/types.hpp"

namespace gridpse {

/// Contents of a native case document: network, unknown-parameter declarations,
/// and optionally measurements. Field names are documented in docs/case-format.md.
struct NativeCase {
    Network network;
    UnknownParameterSet unknowns;
    std::optional<MeasurementSet> measurements;

    bool operator==(const NativeCase&) const = default;
};

/// Throws ParseError on schema violations and DataError on invalid references.
NativeCase parse_native_case(std::string_view text);
std::string serialize_native_case(const NativeCase& c);

NativeCase load_native_case_file(const std::string& path);
void save_native_case_file(const std::string& path, const NativeCase& c);

/// Loads either format, chosen by extension (".m" is MATPOWER, anything else native).
NativeCase load_case_file(const std::string& path);

}  // namespace gridpse
