#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cmdrisk/risk.hpp"

namespace cmdrisk::data {

struct LabeledCommand {
    std::string command;
    RiskClass label = RiskClass::SAFE;
    std::string provenance;  // synthetic template id or file origin
};

struct DatasetSplits {
    std::vector<LabeledCommand> train;
    std::vector<LabeledCommand> dev;
    std::vector<LabeledCommand> test;
    std::array<double, 3> ratios{0.7, 0.2, 0.1};
    uint64_t seed = 0;
};

struct CorpusFile {
    std::string path;
    std::string text;
};

struct CorpusCollection {
    std::vector<CorpusFile> files;
    std::vector<std::string> warnings;  // unreadable entries, skipped
};

// Walks `root` in lexicographic order and keeps files whose name ends in
// .sh or whose first line starts with "#!".
CorpusCollection collect_bash_files(const std::string& root);

// Newline-split command extraction: joins backslash continuations, drops
// blank lines, full-line comments and the shebang. No shell parsing.
std::vector<std::string> extract_commands(const std::string& script_text);

inline constexpr std::array<double, 3> kDefaultClassRatios{0.797, 0.200, 0.003};

// Class counts for n samples: minority classes floor(n * ratio), the
// largest-ratio class absorbs the remainder.
std::array<int64_t, 3> class_counts(int64_t n, const std::array<double, 3>& ratios);

// Template-instantiated commands with gold labels, shuffled. Deterministic
// under seed; identical command strings always carry identical labels.
std::vector<LabeledCommand> generate_synthetic_dataset(
    int64_t n, const std::array<double, 3>& ratios = kDefaultClassRatios, uint64_t seed = 0);

// Scripts (ordered command sequences) for self-supervised pretraining,
// built from short coherent command chains.
std::vector<std::vector<std::string>> generate_synthetic_scripts(size_t count, uint64_t seed);

// Writes scripts as .sh files (shebang, comments, blank lines included)
// under dir; returns the file paths.
std::vector<std::string> write_scripts_tree(const std::string& dir,
                                            const std::vector<std::vector<std::string>>& scripts);

// Per-class shuffle and proportional cut; within-class counts deviate at
// most 1 from the exact proportion. Every class needs >= 3 members.
DatasetSplits stratified_split(const std::vector<LabeledCommand>& dataset,
                               const std::array<double, 3>& ratios, uint64_t seed);

void save_dataset(std::ostream& out, const std::vector<LabeledCommand>& data, uint64_t seed,
                  const std::array<double, 3>& ratios);
void save_dataset_file(const std::string& path, const std::vector<LabeledCommand>& data,
                       uint64_t seed, const std::array<double, 3>& ratios);
std::vector<LabeledCommand> load_dataset(std::istream& in);
std::vector<LabeledCommand> load_dataset_file(const std::string& path);

}  // namespace cmdrisk::data
