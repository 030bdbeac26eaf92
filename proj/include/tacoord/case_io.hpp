#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "tacoord/netmodel.hpp"

namespace tacoord {

SystemCase case_from_json(const nlohmann::json& j);
nlohmann::json case_to_json(const SystemCase& c);

/// Reads and validates a case file. Throws InputError naming the path.
SystemCase load_case(const std::filesystem::path& path);

/// Reads a whole file; throws InputError naming the path when unreadable.
std::string read_text_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

/// Hash of the canonical (sorted-key, compact) JSON form of a case.
std::string case_hash(const SystemCase& c);

}  // namespace tacoord
