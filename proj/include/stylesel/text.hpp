#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace stylesel {

std::string trim(std::string_view s);

bool is_blank(std::string_view s);

// Lowercased alphanumeric runs; everything else is a separator.
std::vector<std::string> tokenize(std::string_view s);

// Number of distinct tokens shared by both texts.
std::size_t token_overlap(std::string_view a, std::string_view b);

}  // namespace stylesel
