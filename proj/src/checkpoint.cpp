#include "frt/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "frt/descriptor.hpp"

namespace frt {

namespace {

const char* stage_key(Stage s) {
    switch (s) {
        case Stage::E: return "stage_e";
        case Stage::G: return "stage_g";
        case Stage::T: return "stage_t";
    }
    return "?";
}

}  // namespace

StageFlags Checkpoint::stages() const {
    StageFlags f;
    auto get = [&](const char* key) {
        auto it = meta.find(key);
        return it != meta.end() && it->second == "1";
    };
    f.e = get("stage_e");
    f.g = get("stage_g");
    f.t = get("stage_t");
    return f;
}

void Checkpoint::set_stage(Stage stage, bool done) { meta[stage_key(stage)] = done ? "1" : "0"; }

int Checkpoint::meta_int(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError("checkpoint meta missing key: " + key);
    int x = 0;
    auto res = std::from_chars(it->second.data(), it->second.data() + it->second.size(), x);
    if (res.ec != std::errc() || res.ptr != it->second.data() + it->second.size())
        throw ParseError("checkpoint meta key " + key + " is not an integer");
    return x;
}

double Checkpoint::meta_double(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError("checkpoint meta missing key: " + key);
    return parse_double(it->second, -1);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint " + path);

    std::string line;
    long line_no = 0;
    if (!std::getline(in, line) || line != "FRTM1")
        throw ParseError("expected FRTM1 header in " + path, 1);
    ++line_no;

    Checkpoint ckpt;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string kind;
        ss >> kind;
        if (kind == "meta") {
            std::string kv;
            ss >> kv;
            auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ParseError("expected 'meta key=value'", line_no);
            ckpt.meta[kv.substr(0, eq)] = kv.substr(eq + 1);
        } else if (kind == "param") {
            std::string name;
            long rows = -1, cols = -1;
            ss >> name >> rows >> cols;
            if (name.empty() || rows < 0 || cols < 0 || ss.fail())
                throw ParseError("expected 'param <name> <rows> <cols>'", line_no);
            Tensor t(static_cast<int>(rows), static_cast<int>(cols));
            for (long r = 0; r < rows; ++r) {
                if (!std::getline(in, line))
                    throw ParseError("truncated parameter block for " + name, line_no);
                ++line_no;
                std::istringstream row(line);
                std::string tok;
                for (long ccc = 0; ccc < cols; ++ccc) {
                    if (!(row >> tok))
                        throw ParseError("expected " + std::to_string(cols) + " values", line_no);
                    t(static_cast<int>(r), static_cast<int>(ccc)) = parse_double(tok, line_no);
                }
                if (row >> tok) throw ParseError("trailing values in parameter row", line_no);
            }
            ckpt.params.add(name, std::move(t));
        } else {
            throw ParseError("unknown record kind '" + kind + "'", line_no);
        }
    }
    return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write checkpoint " + path);
    out << "FRTM1\n";
    for (const auto& [key, value] : ckpt.meta) out << "meta " << key << '=' << value << '\n';
    for (const auto& [name, p] : ckpt.params) {
        out << "param " << name << ' ' << p.tensor.rows() << ' ' << p.tensor.cols() << '\n';
        for (int r = 0; r < p.tensor.rows(); ++r) {
            for (int cc = 0; cc < p.tensor.cols(); ++cc) {
                if (cc) out << ' ';
                out << format_double(p.tensor(r, cc));
            }
            out << '\n';
        }
    }
    if (!out) throw ParseError("write failed: " + path);
}

}  // namespace frt
