// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/metrics.hpp"

#include "paradiff/error.hpp"

namespace paradiff {

namespace {

const char* kInstruction =
    "If the following sentences as summary of the above article, please assign an overall "
    "score. Scores range from 1 to 3, 1 represents bad, 2 represents neutral, 3 represents "
    "good. The output format is 'Score: 1'.";

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

} // namespace

std::string build_llm_prompt(const std::string& article, const std::string& summary) {
    if (article.empty()) raise(ErrorKind::Contract, "prompt: empty article");
    if (summary.empty()) raise(ErrorKind::Contract, "prompt: empty summary");
    std::string out;
    out.reserve(article.size() + summary.size() + 256);
    out += article;
    out += "\n\n";
    out += kInstruction;
    out += "\n\n";
    out += summary;
    out += "\n";
    return out;
}

int parse_llm_score(const std::string& line) {
    std::string body = trim(line);
    if (body.size() == 8 && body.compare(0, 7, "Score: ") == 0) {
        char c = body[7];
        if (c >= '1' && c <= '3') return c - '0';
    }
    raise(ErrorKind::Parse, "unparsable score line '" + line + "' (expected \"Score: 1|2|3\")");
}

} // namespace paradiff
