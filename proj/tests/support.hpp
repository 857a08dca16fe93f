#pragma once

#include <string>

inline std::string data_path(const std::string& file) { return std::string(GRIDPSE_DATA_DIR) + "/" + file; }
