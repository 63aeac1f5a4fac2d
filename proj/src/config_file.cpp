#include "cmdrisk/config_file.hpp"

#include <fstream>
#include <sstream>

#include "cmdrisk/error.hpp"

namespace cmdrisk {

AppConfig default_app_config() { return AppConfig{}; }

AppConfig desk_app_config() {
    AppConfig cfg;
    cfg.model = model::desk_config();
    cfg.train.batch_size = 32;
    cfg.train.epochs = 4;
    cfg.bpe_target_size = 1000;
    return cfg;
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_num(const std::string& value, const std::string& key, size_t line) {
    std::istringstream ss(value);
    T out;
    if (!(ss >> out)) throw ParseError("bad value '" + value + "' for key '" + key + "'", line);
    std::string rest;
    if (ss >> rest) throw ParseError("trailing text after value for key '" + key + "'", line);
    return out;
}

}  // namespace

AppConfig parse_app_config(std::istream& in, AppConfig cfg) {
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected key=value, got '" + line + "'", line_no);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));

        if (key == "hidden_size") cfg.model.hidden_size = parse_num<int>(value, key, line_no);
        else if (key == "dropout_prob") cfg.model.dropout_prob = parse_num<double>(value, key, line_no);
        else if (key == "attention_heads") cfg.model.attention_heads = parse_num<int>(value, key, line_no);
        else if (key == "hidden_layers") cfg.model.hidden_layers = parse_num<int>(value, key, line_no);
        else if (key == "intermediate_size") cfg.model.intermediate_size = parse_num<int>(value, key, line_no);
        else if (key == "vocab_size") cfg.model.vocab_size = parse_num<int>(value, key, line_no);
        else if (key == "max_len") cfg.model.max_len = parse_num<int>(value, key, line_no);
        else if (key == "output_classes") cfg.model.output_classes = parse_num<int>(value, key, line_no);
        else if (key == "initializer_range") cfg.model.initializer_range = parse_num<double>(value, key, line_no);
        else if (key == "batch_size") cfg.train.batch_size = parse_num<int>(value, key, line_no);
        else if (key == "epochs") cfg.train.epochs = parse_num<int>(value, key, line_no);
        else if (key == "learning_rate") cfg.train.learning_rate = parse_num<double>(value, key, line_no);
        else if (key == "mask_rate") cfg.train.mask_rate = parse_num<double>(value, key, line_no);
        else if (key == "negative_ratio") cfg.train.negative_ratio = parse_num<double>(value, key, line_no);
        else if (key == "seed") cfg.train.seed = parse_num<uint64_t>(value, key, line_no);
        else if (key == "threads") cfg.train.threads = parse_num<int>(value, key, line_no);
        else if (key == "max_steps") cfg.train.max_steps = parse_num<int64_t>(value, key, line_no);
        else if (key == "bpe_vocab_size") cfg.bpe_target_size = parse_num<size_t>(value, key, line_no);
        else if (key == "logreg_c") cfg.baseline.logreg_c = parse_num<double>(value, key, line_no);
        else if (key == "logreg_max_iter") cfg.baseline.logreg_max_iter = parse_num<int>(value, key, line_no);
        else if (key == "logreg_tol") cfg.baseline.logreg_tol = parse_num<double>(value, key, line_no);
        else if (key == "ngram_n") cfg.baseline.ngram_n = parse_num<int>(value, key, line_no);
        else if (key == "feature_cap") cfg.baseline.feature_cap = parse_num<size_t>(value, key, line_no);
        else if (key == "w2v_dim") cfg.baseline.w2v_dim = parse_num<int>(value, key, line_no);
        else if (key == "w2v_alpha_start") cfg.baseline.w2v_alpha_start = parse_num<double>(value, key, line_no);
        else if (key == "w2v_alpha_min") cfg.baseline.w2v_alpha_min = parse_num<double>(value, key, line_no);
        else if (key == "w2v_epochs") cfg.baseline.w2v_epochs = parse_num<int>(value, key, line_no);
        else if (key == "w2v_window") cfg.baseline.w2v_window = parse_num<int>(value, key, line_no);
        else if (key == "w2v_negatives") cfg.baseline.w2v_negatives = parse_num<int>(value, key, line_no);
        else if (key == "forest_trees") cfg.baseline.forest_trees = parse_num<int>(value, key, line_no);
        else if (key == "forest_max_depth") cfg.baseline.forest_max_depth = parse_num<int>(value, key, line_no);
        else if (key == "forest_mtry") cfg.baseline.forest_mtry = parse_num<int>(value, key, line_no);
        else if (key == "forest_bootstrap") cfg.baseline.forest_bootstrap = parse_num<int>(value, key, line_no) != 0;
        else throw ParseError("unknown config key '" + key + "'", line_no);
    }
    return cfg;
}

AppConfig load_app_config(const std::string& path, AppConfig base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_app_config(in, base);
}

void write_app_config(std::ostream& out, const AppConfig& cfg) {
    out << "# model architecture\n";
    out << "hidden_size = " << cfg.model.hidden_size << "\n";
    out << "dropout_prob = " << cfg.model.dropout_prob << "\n";
    out << "attention_heads = " << cfg.model.attention_heads << "\n";
    out << "hidden_layers = " << cfg.model.hidden_layers << "\n";
    out << "intermediate_size = " << cfg.model.intermediate_size << "\n";
    out << "vocab_size = " << cfg.model.vocab_size << "\n";
    out << "max_len = " << cfg.model.max_len << "\n";
    out << "output_classes = " << cfg.model.output_classes << "\n";
    out << "initializer_range = " << cfg.model.initializer_range << "\n";
    out << "# training\n";
    out << "batch_size = " << cfg.train.batch_size << "\n";
    out << "epochs = " << cfg.train.epochs << "\n";
    out << "learning_rate = " << cfg.train.learning_rate << "\n";
    out << "mask_rate = " << cfg.train.mask_rate << "\n";
    out << "negative_ratio = " << cfg.train.negative_ratio << "\n";
    out << "threads = " << cfg.train.threads << "\n";
    out << "bpe_vocab_size = " << cfg.bpe_target_size << "\n";
    out << "# classical baselines\n";
    out << "logreg_c = " << cfg.baseline.logreg_c << "\n";
    out << "ngram_n = " << cfg.baseline.ngram_n << "\n";
    out << "feature_cap = " << cfg.baseline.feature_cap << "\n";
    out << "w2v_dim = " << cfg.baseline.w2v_dim << "\n";
    out << "w2v_alpha_start = " << cfg.baseline.w2v_alpha_start << "\n";
    out << "w2v_alpha_min = " << cfg.baseline.w2v_alpha_min << "\n";
    out << "w2v_epochs = " << cfg.baseline.w2v_epochs << "\n";
    out << "w2v_window = " << cfg.baseline.w2v_window << "\n";
    out << "w2v_negatives = " << cfg.baseline.w2v_negatives << "\n";
    out << "forest_trees = " << cfg.baseline.forest_trees << "\n";
    out << "forest_max_depth = " << cfg.baseline.forest_max_depth << "\n";
}

}  // namespace cmdrisk
