#include "frt/descriptor.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace frt {

RegionMap RegionMap::standard() {
    RegionMap m;
    m.keypoints[kPartGlobal] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    m.keypoints[kPartHead] = {0, 1};
    m.keypoints[kPartTorso] = {0, 1, 2, 3, 4, 5};
    m.keypoints[kPartLeg] = {6, 7, 8, 9, 10, 11};
    return m;
}

void RegionMap::validate() const {
    for (int p = 0; p < kNumParts; ++p) {
        if (keypoints[p].empty())
            throw ConfigError(std::string("empty keypoint region: ") + part_name(p));
        for (int k : keypoints[p])
            if (k < 0 || k >= kNumKeypoints)
                throw ConfigError("keypoint index out of range in region " +
                                  std::string(part_name(p)));
    }
}

Tensor PersonDescriptor::parts_matrix() const {
    int c = channels();
    Tensor out(kNumParts, c);
    for (int p = 0; p < kNumParts; ++p)
        for (int j = 0; j < c; ++j) out(p, j) = parts[p][j];
    return out;
}

Tensor PersonDescriptor::concat_parts() const {
    int c = channels();
    Tensor out(1, kNumParts * c);
    for (int p = 0; p < kNumParts; ++p)
        for (int j = 0; j < c; ++j) out(0, p * c + j) = parts[p][j];
    return out;
}

std::array<double, kNumParts> visibility_scores(const std::array<double, kNumKeypoints>& kp_conf,
                                               const RegionMap& regions) {
    regions.validate();
    std::array<double, kNumParts> v{};
    for (int p = 0; p < kNumParts; ++p) {
        double s = 0.0;
        for (int k : regions.keypoints[p]) s += kp_conf[k];
        v[p] = s / static_cast<double>(regions.keypoints[p].size());
    }
    return v;
}

PersonDescriptor apply_occlusion_threshold(PersonDescriptor d, double delta) {
    for (int p = 0; p < kNumParts; ++p) {
        if (d.vis[p] < delta) std::fill(d.parts[p].begin(), d.parts[p].end(), 0.0);
    }
    return d;
}

std::string format_double(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& token, long line_no) {
    double x = 0.0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), x);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size())
        throw ParseError("bad numeric field '" + token + "'", line_no);
    if (!std::isfinite(x)) throw ParseError("non-finite value '" + token + "'", line_no);
    return x;
}

namespace {

long parse_int(const std::string& token, long line_no) {
    long x = 0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), x);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size())
        throw ParseError("bad integer field '" + token + "'", line_no);
    return x;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

}  // namespace

std::vector<PersonDescriptor> read_pfv(const std::string& path, const RegionMap& regions) {
    regions.validate();
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);

    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty file: " + path, 1);
    ++line_no;

    auto header = split_ws(line);
    if (header.size() != 3 || header[0] != "PFV1")
        throw ParseError("expected 'PFV1 <c> <K>' header", line_no);
    long c = parse_int(header[1], line_no);
    long k = parse_int(header[2], line_no);
    if (c < 0) throw ParseError("channel count must be non-negative", line_no);
    if (k != kNumKeypoints)
        throw ParseError("keypoint count must be " + std::to_string(kNumKeypoints), line_no);

    const std::size_t fields = 2 + kNumKeypoints + 4 * static_cast<std::size_t>(c);
    std::vector<PersonDescriptor> out;
    while (std::getline(in, line)) {
        ++line_no;
        auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (c == 0) throw ParseError("record in a file declaring zero channels", line_no);
        if (toks.size() != fields)
            throw ParseError("expected " + std::to_string(fields) + " fields, got " +
                                 std::to_string(toks.size()),
                             line_no);
        PersonDescriptor d;
        long id = parse_int(toks[0], line_no);
        long cam = parse_int(toks[1], line_no);
        if (id < 0 || cam < 0) throw ParseError("negative id or camera", line_no);
        d.id = static_cast<int>(id);
        d.camera = static_cast<int>(cam);
        std::size_t pos = 2;
        for (int i = 0; i < kNumKeypoints; ++i) d.kp_conf[i] = parse_double(toks[pos++], line_no);
        for (int p = 0; p < kNumParts; ++p) {
            d.parts[p].resize(c);
            for (long j = 0; j < c; ++j) d.parts[p][j] = parse_double(toks[pos++], line_no);
        }
        d.vis = visibility_scores(d.kp_conf, regions);
        out.push_back(std::move(d));
    }
    return out;
}

void write_pfv(const std::string& path, const std::vector<PersonDescriptor>& descriptors) {
    int c = descriptors.empty() ? 0 : descriptors.front().channels();
    for (const auto& d : descriptors)
        if (d.channels() != c) throw ShapeError("descriptors have mixed channel counts");

    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "PFV1 " << c << ' ' << kNumKeypoints << '\n';
    for (const auto& d : descriptors) {
        out << d.id << ' ' << d.camera;
        for (double x : d.kp_conf) out << ' ' << format_double(x);
        for (int p = 0; p < kNumParts; ++p)
            for (double x : d.parts[p]) out << ' ' << format_double(x);
        out << '\n';
    }
    if (!out) throw ParseError("write failed: " + path);
}

}  // namespace frt
