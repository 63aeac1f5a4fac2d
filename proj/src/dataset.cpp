#include "cmdrisk/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "cmdrisk/error.hpp"
#include "cmdrisk/rng.hpp"

namespace fs = std::filesystem;

namespace cmdrisk::data {

// ---------------------------------------------------------------------------
// Corpus ingestion
// ---------------------------------------------------------------------------

namespace {

bool first_line_is_shebang(const std::string& text) {
    return text.size() >= 2 && text[0] == '#' && text[1] == '!';
}

void walk_sorted(const fs::path& dir, CorpusCollection& out) {
    std::vector<fs::path> entries;
    std::error_code ec;
    for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec))
        entries.push_back(it->path());
    if (ec) {
        out.warnings.push_back("unreadable directory: " + dir.string());
        return;
    }
    std::sort(entries.begin(), entries.end(),
              [](const fs::path& a, const fs::path& b) { return a.string() < b.string(); });
    for (const fs::path& p : entries) {
        std::error_code tec;
        if (fs::is_directory(p, tec)) {
            walk_sorted(p, out);
            continue;
        }
        if (!fs::is_regular_file(p, tec)) continue;
        std::ifstream in(p, std::ios::binary);
        if (!in) {
            out.warnings.push_back("unreadable file: " + p.string());
            continue;
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string text = buf.str();
        bool is_sh = p.extension() == ".sh";
        if (is_sh || first_line_is_shebang(text))
            out.files.push_back(CorpusFile{p.string(), std::move(text)});
    }
}

}  // namespace

CorpusCollection collect_bash_files(const std::string& root) {
    CorpusCollection out;
    std::error_code ec;
    if (!fs::exists(root, ec) || !fs::is_directory(root, ec))
        throw ConfigError("corpus root '" + root + "' is not a readable directory");
    walk_sorted(root, out);
    return out;
}

std::vector<std::string> extract_commands(const std::string& script_text) {
    std::vector<std::string> raw_lines;
    {
        std::string cur;
        for (char c : script_text) {
            if (c == '\n') {
                raw_lines.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) raw_lines.push_back(cur);
    }

    // Join backslash continuations into logical lines.
    std::vector<std::string> logical;
    std::string pending;
    bool continuing = false;
    for (std::string& line : raw_lines) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string piece = line;
        bool continues = !piece.empty() && piece.back() == '\\';
        if (continues) piece.pop_back();
        if (continuing)
            pending += piece;
        else
            pending = piece;
        if (continues) {
            continuing = true;
        } else {
            logical.push_back(pending);
            pending.clear();
            continuing = false;
        }
    }
    if (continuing) logical.push_back(pending);

    std::vector<std::string> commands;
    for (const std::string& line : logical) {
        size_t b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        size_t e = line.find_last_not_of(" \t");
        std::string cmd = line.substr(b, e - b + 1);
        if (cmd[0] == '#') continue;  // comments and the shebang
        commands.push_back(std::move(cmd));
    }
    return commands;
}

// ---------------------------------------------------------------------------
// Synthetic command templates (Table-1-style archetypes)
// ---------------------------------------------------------------------------

namespace {

const char* kServices[] = {"nginx",    "mysqld", "sshd",  "redis-server", "postgres",
                           "kafka",    "etcd",   "crond", "dockerd",      "rsyslog",
                           "haproxy",  "consul", "vault", "zookeeper",    "memcached"};
const char* kUsers[] = {"deploy", "admin", "www-data", "backup", "ops", "svc-batch"};
const char* kHosts[] = {"web01", "db02", "cache03", "node7", "edge12", "10.20.8.41", "build-4"};
const char* kSysDirs[] = {"/bin",  "/sbin", "/etc",  "/usr/bin", "/usr/lib",
                          "/boot", "/lib",  "/usr",  "/var/lib/mysql"};
const char* kTmpRoots[] = {"/tmp",          "/var/tmp",  "./build",
                           "./cache",       "/data/scratch", "/home/deploy/tmp"};
const char* kDevices[] = {"/dev/sda",  "/dev/sda1",    "/dev/sdb",
                          "/dev/vda",  "/dev/nvme0n1", "/dev/nvme0n1p2"};
const char* kGlobs[] = {"*.log", "*.tmp", "*.bak", "*.old", "*.gz", "*.core"};
const char* kEnvVars[] = {"$DELETE_LIST", "$FILES", "$TARGETS", "$OLD_LOGS", "$CLEANUP_SET"};
const char* kPhrases[] = {"restart done",     "cleanup finished", "deploy ok",
                          "backup complete",  "rotating logs",    "maintenance window open"};

struct Filler {
    Rng& rng;

    template <size_t N>
    std::string pick(const char* const (&pool)[N]) {
        return pool[rng.below(N)];
    }

    std::string digits(int count) {
        std::string s;
        for (int i = 0; i < count; ++i) s.push_back(static_cast<char>('0' + rng.below(10)));
        return s;
    }

    std::string word() {
        static const char* alphabet = "abcdefghijklmnopqrstuvwxyz";
        size_t len = 3 + rng.below(7);
        std::string s;
        for (size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.below(26)]);
        return s;
    }

    std::string pid() { return std::to_string(100 + rng.below(99000)); }
    std::string count_small() { return std::to_string(1 + rng.below(200)); }

    std::string timestamp() {
        // Table-1 style 2023-04-21_12:45:67 (fields are plain digits).
        return "20" + digits(2) + "-" + digits(2) + "-" + digits(2) + "_" + digits(2) + ":" +
               digits(2) + ":" + digits(2);
    }

    std::string logfile() {
        switch (rng.below(3)) {
            case 0: return timestamp() + ".log";
            case 1: return word() + "-" + digits(3) + ".log";
            default: return word() + ".log." + std::to_string(1 + rng.below(9));
        }
    }

    std::string tmppath() { return pick(kTmpRoots) + "/" + word(); }
    std::string plainfile() { return word() + "." + pick_ext(); }
    std::string pick_ext() {
        static const char* exts[] = {"txt", "csv", "conf", "out", "dat", "yaml"};
        return exts[rng.below(6)];
    }
};

struct Template {
    const char* id;
    RiskClass label;
    std::function<std::string(Filler&)> make;
};

// Risk hinges on structure inside whitespace tokens (path prefixes, quoting,
// backticks, flags), mirroring how small syntax changes flip risk in real
// commands.
const std::vector<Template>& all_templates() {
    static const std::vector<Template> templates = {
        // ---- SAFE: read-only or scoped single-file operations ----
        {"safe.ls", RiskClass::SAFE,
         [](Filler& f) {
             switch (f.rng.below(5)) {
                 case 0: return std::string("ls");
                 case 1: return std::string("ls -la");
                 case 2: return "ls -lh " + f.tmppath();
                 case 3: return std::string("time ls");
                 default: return "ls " + f.tmppath();
             }
         }},
        {"safe.cat_grep", RiskClass::SAFE,
         [](Filler& f) {
             switch (f.rng.below(3)) {
                 case 0: return "cat " + f.pick(kEnvVars) + " | grep " + f.pick(kGlobs);
                 case 1: return "cat " + f.plainfile() + " | grep -v " + f.word();
                 default: return "grep -i " + f.word() + " " + f.tmppath() + "/" + f.logfile();
             }
         }},
        {"safe.tail", RiskClass::SAFE,
         [](Filler& f) {
             return (f.rng.below(2) ? "tail -n " : "head -n ") + f.count_small() + " " +
                    f.logfile();
         }},
        {"safe.echo_quoted", RiskClass::SAFE,
         [](Filler& f) {
             if (f.rng.below(2)) return "echo 'kill " + f.pid() + "'";
             return "echo '" + f.pick(kPhrases) + "'";
         }},
        {"safe.rm_log", RiskClass::SAFE,
         [](Filler& f) {
             if (f.rng.below(2)) return "rm " + f.logfile();
             return "rm " + f.tmppath() + ".tmp";
         }},
        {"safe.disk", RiskClass::SAFE,
         [](Filler& f) {
             switch (f.rng.below(4)) {
                 case 0: return std::string("df -h");
                 case 1: return "du -sh " + f.tmppath();
                 case 2: return std::string("free -m");
                 default: return std::string("uptime");
             }
         }},
        {"safe.ps", RiskClass::SAFE,
         [](Filler& f) {
             switch (f.rng.below(3)) {
                 case 0: return std::string("ps aux");
                 case 1: return "ps aux | grep " + f.pick(kServices);
                 default: return "pgrep " + f.pick(kServices);
             }
         }},
        {"safe.svc_status", RiskClass::SAFE,
         [](Filler& f) {
             switch (f.rng.below(3)) {
                 case 0: return "systemctl status " + f.pick(kServices);
                 case 1: return "service " + f.pick(kServices) + " status";
                 default: return "journalctl -u " + f.pick(kServices) + " -n " + f.count_small();
             }
         }},
        {"safe.find", RiskClass::SAFE,
         [](Filler& f) {
             return "find " + f.pick(kTmpRoots) + " -name '" + f.pick(kGlobs) + "'";
         }},
        {"safe.wc", RiskClass::SAFE,
         [](Filler& f) {
             return (f.rng.below(2) ? "wc -l " : "grep -c error ") + f.plainfile();
         }},
        {"safe.net", RiskClass::SAFE,
         [](Filler& f) {
             if (f.rng.below(2)) return "ping -c 3 " + f.pick(kHosts);
             return "curl -s http://" + f.pick(kHosts) + "/health";
         }},

        // ---- RISKY: state-altering, recoverable or scoped ----
        {"risky.svc_restart", RiskClass::RISKY,
         [](Filler& f) {
             switch (f.rng.below(3)) {
                 case 0: return "systemctl restart " + f.pick(kServices);
                 case 1: return "systemctl stop " + f.pick(kServices);
                 default: return "service " + f.pick(kServices) + " restart";
             }
         }},
        {"risky.rm_scoped", RiskClass::RISKY,
         [](Filler& f) {
             switch (f.rng.below(3)) {
                 case 0: return "rm -r " + f.tmppath();
                 case 1: return "rm -rf " + f.tmppath();
                 default: return "rm -rf ./" + f.word();
             }
         }},
        {"risky.pipe_rm", RiskClass::RISKY,
         [](Filler& f) {
             switch (f.rng.below(3)) {
                 case 0: return "cat " + f.pick(kEnvVars) + " | xargs -0 rm";
                 case 1: return "cat " + f.plainfile() + " | xargs rm -f";
                 default:
                     return "find " + f.pick(kTmpRoots) + " -name '" + f.pick(kGlobs) +
                            "' | xargs rm";
             }
         }},
        {"risky.kill", RiskClass::RISKY,
         [](Filler& f) {
             switch (f.rng.below(4)) {
                 case 0: return "kill -9 " + f.pid();
                 case 1: return "kill " + f.pid();
                 case 2: return "time kill -9 " + f.pid();
                 default: return "pkill -f " + f.pick(kServices);
             }
         }},
        {"risky.echo_backtick", RiskClass::RISKY,
         [](Filler& f) { return "echo `kill " + f.pid() + "`"; }},
        {"risky.perms", RiskClass::RISKY,
         [](Filler& f) {
             if (f.rng.below(2)) return "chmod -R 777 " + f.tmppath();
             std::string u = f.pick(kUsers);
             return "chown -R " + u + ":" + u + " " + f.tmppath();
         }},
        {"risky.move", RiskClass::RISKY,
         [](Filler& f) {
             if (f.rng.below(2)) return "mv -f " + f.plainfile() + " " + f.tmppath();
             return "cp -f " + f.plainfile() + " " + f.tmppath() + "/";
         }},
        {"risky.truncate", RiskClass::RISKY,
         [](Filler& f) { return "truncate -s 0 " + f.logfile(); }},

        // ---- BLOCKED: irreversible, system-destroying ----
        {"blocked.rm_system", RiskClass::BLOCKED,
         [](Filler& f) {
             switch (f.rng.below(3)) {
                 case 0: return "rm -rf " + f.pick(kSysDirs) + "/*";
                 case 1: return "rm -rf " + f.pick(kSysDirs);
                 default: return "rm -fr " + f.pick(kSysDirs) + "/*";
             }
         }},
        {"blocked.dd_device", RiskClass::BLOCKED,
         [](Filler& f) {
             if (f.rng.below(2)) return "dd if=/dev/zero of=" + f.pick(kDevices) + " bs=1M";
             return "dd if=/dev/urandom of=" + f.pick(kDevices);
         }},
        {"blocked.mkfs", RiskClass::BLOCKED,
         [](Filler& f) {
             switch (f.rng.below(3)) {
                 case 0: return "mkfs.ext4 " + f.pick(kDevices);
                 case 1: return "mkfs -t xfs " + f.pick(kDevices);
                 default: return "mkfs.xfs -f " + f.pick(kDevices);
             }
         }},
    };
    return templates;
}

std::vector<size_t> templates_for(RiskClass c) {
    std::vector<size_t> idx;
    const auto& all = all_templates();
    for (size_t i = 0; i < all.size(); ++i)
        if (all[i].label == c) idx.push_back(i);
    return idx;
}

}  // namespace

std::array<int64_t, 3> class_counts(int64_t n, const std::array<double, 3>& ratios) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("class ratios must sum to 1");
    for (double r : ratios)
        if (r < 0.0) throw ConfigError("class ratios must be non-negative");

    size_t major = 0;
    for (size_t c = 1; c < 3; ++c)
        if (ratios[c] > ratios[major]) major = c;

    std::array<int64_t, 3> counts{0, 0, 0};
    int64_t assigned = 0;
    for (size_t c = 0; c < 3; ++c) {
        if (c == major) continue;
        counts[c] = static_cast<int64_t>(std::floor(static_cast<double>(n) * ratios[c]));
        assigned += counts[c];
    }
    counts[major] = n - assigned;
    return counts;
}

std::vector<LabeledCommand> generate_synthetic_dataset(int64_t n,
                                                       const std::array<double, 3>& ratios,
                                                       uint64_t seed) {
    double min_pos = 1.0;
    for (double r : ratios)
        if (r > 0.0) min_pos = std::min(min_pos, r);
    int64_t min_n = static_cast<int64_t>(std::ceil(1.0 / min_pos));
    if (n < min_n)
        throw ConfigError("n=" + std::to_string(n) + " cannot realize all classes (need >= " +
                          std::to_string(min_n) + ")");

    std::array<int64_t, 3> counts = class_counts(n, ratios);

    Rng rng(mix_seed(seed, 0xda7a));
    std::vector<LabeledCommand> out;
    out.reserve(static_cast<size_t>(n));
    const auto& all = all_templates();
    for (int c = 0; c < 3; ++c) {
        std::vector<size_t> pool = templates_for(static_cast<RiskClass>(c));
        for (int64_t i = 0; i < counts[c]; ++i) {
            const Template& t = all[pool[rng.below(pool.size())]];
            Filler f{rng};
            out.push_back(LabeledCommand{t.make(f), t.label, t.id});
        }
    }
    rng.shuffle(out);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic scripts
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> generate_synthetic_scripts(size_t count, uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5c21));
    Filler f{rng};

    // Short coherent chains give the next-command task a learnable signal.
    using Chain = std::function<std::vector<std::string>(Filler&)>;
    static const std::vector<Chain> chains = {
        [](Filler& f) -> std::vector<std::string> {
            std::string d = f.tmppath();
            return {"cd " + d, "ls -la"};
        },
        [](Filler& f) -> std::vector<std::string> {
            std::string s = f.pick(kServices);
            return {"systemctl stop " + s, "systemctl start " + s, "systemctl status " + s};
        },
        [](Filler& f) -> std::vector<std::string> {
            return {"df -h", "du -sh " + f.tmppath()};
        },
        [](Filler& f) -> std::vector<std::string> {
            std::string v = f.pick(kEnvVars);
            return {"cat " + v + " | grep " + f.pick(kGlobs), "cat " + v + " | xargs -0 rm"};
        },
        [](Filler& f) -> std::vector<std::string> {
            std::string root = f.pick(kTmpRoots);
            std::string g = f.pick(kGlobs);
            return {"find " + root + " -name '" + g + "'",
                    "find " + root + " -name '" + g + "' | xargs rm"};
        },
        [](Filler& f) -> std::vector<std::string> {
            return {"ps aux | grep " + f.pick(kServices), "kill -9 " + f.pid()};
        },
        [](Filler& f) -> std::vector<std::string> {
            std::string a = "backup-" + f.timestamp() + ".tar.gz";
            return {"tar -czf " + a + " " + f.tmppath(), "mv -f " + a + " /backup/"};
        },
        [](Filler& f) -> std::vector<std::string> {
            return {"grep -c error " + f.logfile(), "echo '" + f.pick(kPhrases) + "'"};
        },
        [](Filler& f) -> std::vector<std::string> {
            std::string d = f.tmppath();
            return {"mkdir -p " + d, "chown -R " + f.pick(kUsers) + " " + d};
        },
    };

    std::vector<std::vector<std::string>> scripts;
    scripts.reserve(count);
    const auto& all = all_templates();
    for (size_t i = 0; i < count; ++i) {
        std::vector<std::string> script;
        size_t n_chains = 1 + rng.below(4);
        for (size_t k = 0; k < n_chains; ++k) {
            if (rng.below(4) == 0) {
                // Standalone command drawn from the labeled template pool.
                const Template& t = all[rng.below(all.size())];
                script.push_back(t.make(f));
            } else {
                auto cmds = chains[rng.below(chains.size())](f);
                script.insert(script.end(), cmds.begin(), cmds.end());
            }
        }
        scripts.push_back(std::move(script));
    }
    return scripts;
}

std::vector<std::string> write_scripts_tree(const std::string& dir,
                                            const std::vector<std::vector<std::string>>& scripts) {
    fs::create_directories(dir);
    std::vector<std::string> paths;
    paths.reserve(scripts.size());
    for (size_t i = 0; i < scripts.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "script_%05zu.sh", i);
        fs::path p = fs::path(dir) / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + p.string());
        out << "#!/bin/bash\n";
        if (i % 3 == 0) out << "# scheduled maintenance\n\n";
        for (const std::string& c : scripts[i]) out << c << "\n";
        paths.push_back(p.string());
    }
    return paths;
}

// ---------------------------------------------------------------------------
// Stratified splits
// ---------------------------------------------------------------------------

DatasetSplits stratified_split(const std::vector<LabeledCommand>& dataset,
                               const std::array<double, 3>& ratios, uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("split ratios must sum to 1");

    std::array<std::vector<size_t>, 3> by_class;
    for (size_t i = 0; i < dataset.size(); ++i)
        by_class[static_cast<int>(dataset[i].label)].push_back(i);

    for (int c = 0; c < 3; ++c) {
        if (!by_class[c].empty() && by_class[c].size() < 3)
            throw TrainingError(std::string("class ") + to_string(static_cast<RiskClass>(c)) +
                                " has fewer than 3 members");
    }

    DatasetSplits out;
    out.ratios = ratios;
    out.seed = seed;
    for (int c = 0; c < 3; ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) continue;
        Rng rng(mix_seed(seed, 0x51u, static_cast<uint64_t>(c)));
        rng.shuffle(idx);

        // Largest-remainder apportionment of this class over the 3 splits.
        int64_t m = static_cast<int64_t>(idx.size());
        std::array<int64_t, 3> take{};
        std::array<double, 3> rem{};
        int64_t used = 0;
        for (int s = 0; s < 3; ++s) {
            double q = static_cast<double>(m) * ratios[s];
            take[s] = static_cast<int64_t>(std::floor(q));
            rem[s] = q - static_cast<double>(take[s]);
            used += take[s];
        }
        std::array<int, 3> order{0, 1, 2};
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (rem[a] != rem[b]) return rem[a] > rem[b];
            return a < b;
        });
        for (int k = 0; used < m; ++k, ++used) take[order[k % 3]]++;

        size_t pos = 0;
        std::vector<LabeledCommand>* dests[3] = {&out.train, &out.dev, &out.test};
        for (int s = 0; s < 3; ++s)
            for (int64_t k = 0; k < take[s]; ++k) dests[s]->push_back(dataset[idx[pos++]]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

void save_dataset(std::ostream& out, const std::vector<LabeledCommand>& data, uint64_t seed,
                  const std::array<double, 3>& ratios) {
    out << "dataset v1 seed=" << seed << " ratios=" << ratios[0] << "," << ratios[1] << ","
        << ratios[2] << "\n";
    for (const LabeledCommand& lc : data) out << to_string(lc.label) << "\t" << lc.command << "\n";
}

void save_dataset_file(const std::string& path, const std::vector<LabeledCommand>& data,
                       uint64_t seed, const std::array<double, 3>& ratios) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    save_dataset(out, data, seed, ratios);
}

std::vector<LabeledCommand> load_dataset(std::istream& in) {
    std::string line;
    size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty dataset file");
    ++line_no;
    if (line.rfind("dataset v1", 0) != 0) throw ParseError("bad dataset header", line_no);

    std::vector<LabeledCommand> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("missing tab separator", line_no);
        LabeledCommand lc;
        lc.label = risk_from_string(line.substr(0, tab));
        lc.command = line.substr(tab + 1);
        lc.provenance = "file";
        if (lc.command.find_first_not_of(" \t") == std::string::npos)
            throw ParseError("empty command", line_no);
        out.push_back(std::move(lc));
    }
    return out;
}

std::vector<LabeledCommand> load_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset file '" + path + "'");
    return load_dataset(in);
}

}  // namespace cmdrisk::data
