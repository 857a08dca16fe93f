#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include "gridpse/grid/network.hpp"

namespace gridpse {

/// Reads the bus, gen, and branch tables of a MATPOWER-style case file.
///
/// Quantities are converted to per-unit on `mpc.baseMVA`; series impedances become
/// G = r/(r²+x²), B = −x/(r²+x²). Transformer tap ratios and phase shifts are
/// ignored. Load buses with no load and no shunt are marked zero-injection. Branch
/// ids are 1-based row numbers of the branch table.
///
/// Throws ParseError (with line number) for malformed rows and DataError for
/// invariant violations (duplicate ids, slack count, connectivity).
Network parse_matpower(std::string_view text);
Network parse_matpower(std::istream& in);

Network load_matpower_file(const std::string& path);

}  // namespace gridpse
