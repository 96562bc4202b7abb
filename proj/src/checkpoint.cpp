#include "mrf/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mrf/errors.hpp"

namespace mrf {

namespace {

constexpr std::string_view kMagic = "mrf-checkpoint 1";

std::string format_hexfloat(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_double(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (token.empty() || end != token.c_str() + token.size())
        throw CorruptArtifactError("checkpoint: bad number '" + token + "'");
    return v;
}

std::size_t parse_size(const std::string& token) {
    if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos)
        throw CorruptArtifactError("checkpoint: bad integer '" + token + "'");
    return std::stoull(token);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string serialize_parameters(const ParameterStore& params) {
    std::ostringstream os;
    os << kMagic << '\n' << "count " << params.size() << '\n';
    for (const auto& p : params.items()) {
        os << "param " << p.name << ' ' << p.tensor.rank();
        for (auto d : p.tensor.shape()) os << ' ' << d;
        os << '\n';
        bool first = true;
        for (double v : p.tensor.data()) {
            if (!first) os << ' ';
            os << format_hexfloat(v);
            first = false;
        }
        os << '\n';
    }
    std::string body = os.str();
    body += "checksum " + hex64(fnv1a64(body)) + '\n';
    return body;
}

ParameterStore deserialize_parameters(std::string_view text) {
    const auto pos = text.rfind("checksum ");
    if (pos == std::string_view::npos) throw CorruptArtifactError("checkpoint: missing checksum");
    const std::string_view body = text.substr(0, pos);
    std::string stored(text.substr(pos + 9));
    while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
    if (stored != hex64(fnv1a64(body))) throw CorruptArtifactError("checkpoint: checksum mismatch");

    std::istringstream is{std::string(body)};
    std::string line;
    if (!std::getline(is, line) || line != kMagic) throw CorruptArtifactError("checkpoint: bad header");
    std::string word, token;
    if (!(is >> word >> token) || word != "count") throw CorruptArtifactError("checkpoint: missing count");
    const std::size_t count = parse_size(token);

    ParameterStore store;
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        if (!(is >> word >> name >> token) || word != "param")
            throw CorruptArtifactError("checkpoint: truncated parameter header");
        const std::size_t rank = parse_size(token);
        Shape shape(rank);
        for (auto& d : shape) {
            if (!(is >> token)) throw CorruptArtifactError("checkpoint: truncated shape");
            d = parse_size(token);
        }
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) {
            if (!(is >> token)) throw CorruptArtifactError("checkpoint: truncated values for '" + name + "'");
            v = parse_double(token);
        }
        try {
            store.add(name, Tensor(shape, std::move(values)));
        } catch (const std::exception& e) {
            throw CorruptArtifactError(std::string("checkpoint: ") + e.what());
        }
    }
    if (is >> token) throw CorruptArtifactError("checkpoint: trailing data");
    return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << serialize_parameters(params);
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptArtifactError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_parameters(buf.str());
}

}  // namespace mrf
