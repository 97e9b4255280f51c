#include "dps/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace dps {

namespace {

constexpr const char* kMagic = "DPS-CHECKPOINT";

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void write_le(std::ostream& os, const double* data, Eigen::Index n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        for (Eigen::Index i = 0; i < n; ++i) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(data[i]);
            unsigned char buf[8];
            for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(bits >> (8 * b));
            os.write(reinterpret_cast<const char*>(buf), 8);
        }
    }
}

void read_le(std::istream& is, double* data, Eigen::Index n) {
    std::vector<unsigned char> buf(static_cast<std::size_t>(n) * 8);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() != static_cast<std::streamsize>(buf.size())) throw CheckpointError("checkpoint data truncated");
    for (Eigen::Index i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[8 * i + b]) << (8 * b);
        data[i] = std::bit_cast<double>(bits);
    }
}

std::string activation_name(nn::Activation a) { return a == nn::Activation::Gelu ? "gelu" : "identity"; }

nn::Activation parse_activation(const std::string& s) {
    if (s == "gelu") return nn::Activation::Gelu;
    if (s == "identity") return nn::Activation::Identity;
    throw CheckpointError("unknown activation '" + s + "'");
}

struct HeaderReader {
    std::istream& is;
    int line_no = 0;

    std::vector<std::string> next() {
        std::string line;
        if (!std::getline(is, line)) throw CheckpointError("checkpoint header ended early");
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string w; ls >> w;) tok.push_back(w);
        if (tok.empty()) throw CheckpointError("empty header line " + std::to_string(line_no));
        return tok;
    }

    std::string expect(const std::string& key) {
        auto tok = next();
        if (tok.size() != 2 || tok[0] != key) {
            throw CheckpointError("checkpoint header line " + std::to_string(line_no) + ": expected '" + key + "'");
        }
        return tok[1];
    }
};

long long to_int(const std::string& s) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw CheckpointError("bad integer '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw CheckpointError("bad integer '" + s + "'");
    }
}

double to_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw CheckpointError("bad number '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw CheckpointError("bad number '" + s + "'");
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    ckpt.params.validate();
    const nn::Architecture& a = ckpt.params.arch;
    std::ostringstream header;
    header << kMagic << ' ' << kCheckpointVersion << '\n';
    header << "input_dim " << a.input_dim << '\n';
    header << "output_dim " << a.output_dim << '\n';
    header << "hidden " << a.hidden << '\n';
    header << "time_embed_dim " << a.embedding.dim << '\n';
    header << "frequency_base " << format_double(a.embedding.frequency_base) << '\n';
    header << "time_scale " << format_double(a.embedding.time_scale) << '\n';
    header << "activation " << activation_name(a.activation) << '\n';
    header << "seed " << ckpt.seed << '\n';
    header << "iteration " << ckpt.iteration << '\n';
    header << "metadata " << ckpt.metadata.size() << '\n';
    for (const auto& [k, v] : ckpt.metadata) {
        auto bad = [](const std::string& s) { return s.empty() || s.find_first_of(" \t\n") != std::string::npos; };
        if (bad(k) || bad(v)) throw CheckpointError("metadata keys/values must be non-empty without whitespace");
        header << "meta " << k << ' ' << v << '\n';
    }
    int arrays = 0;
    ckpt.params.for_each_layer([&](const std::string&, const nn::DenseLayer&) { arrays += 2; });
    header << "arrays " << arrays << '\n';
    ckpt.params.for_each_layer([&](const std::string& name, const nn::DenseLayer& l) {
        header << "array " << name << ".weight " << l.weight.rows() << ' ' << l.weight.cols() << '\n';
        header << "array " << name << ".bias " << l.bias.size() << '\n';
    });
    header << "end_header\n";

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw CheckpointError("cannot open " + tmp.string() + " for writing");
        const std::string h = header.str();
        os.write(h.data(), static_cast<std::streamsize>(h.size()));
        ckpt.params.for_each_layer([&](const std::string&, const nn::DenseLayer& l) {
            write_le(os, l.weight.data(), l.weight.size());
            write_le(os, l.bias.data(), l.bias.size());
        });
        if (!os) throw CheckpointError("write to " + tmp.string() + " failed");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
    HeaderReader hr{is};
    auto magic = hr.next();
    if (magic.size() != 2 || magic[0] != kMagic) throw CheckpointError(path.string() + " is not a checkpoint");
    if (to_int(magic[1]) != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + magic[1]);

    Checkpoint ckpt;
    nn::Architecture a;
    a.input_dim = static_cast<int>(to_int(hr.expect("input_dim")));
    a.output_dim = static_cast<int>(to_int(hr.expect("output_dim")));
    a.hidden = static_cast<int>(to_int(hr.expect("hidden")));
    a.embedding.dim = static_cast<int>(to_int(hr.expect("time_embed_dim")));
    a.embedding.frequency_base = to_double(hr.expect("frequency_base"));
    a.embedding.time_scale = to_double(hr.expect("time_scale"));
    a.activation = parse_activation(hr.expect("activation"));
    ckpt.seed = static_cast<std::uint64_t>(to_int(hr.expect("seed")));
    ckpt.iteration = static_cast<std::uint64_t>(to_int(hr.expect("iteration")));
    const long long nmeta = to_int(hr.expect("metadata"));
    for (long long i = 0; i < nmeta; ++i) {
        auto tok = hr.next();
        if (tok.size() != 3 || tok[0] != "meta") throw CheckpointError("malformed metadata line");
        ckpt.metadata[tok[1]] = tok[2];
    }
    if (a.input_dim < 1 || a.output_dim < 1 || a.hidden < 1 || a.embedding.dim < 2 || a.embedding.dim % 2 != 0) {
        throw CheckpointError("invalid architecture in checkpoint header");
    }

    try {
        ckpt.params = nn::zero_network(a);
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(e.what());
    }
    int expected = 0;
    ckpt.params.for_each_layer([&](const std::string&, const nn::DenseLayer&) { expected += 2; });
    if (to_int(hr.expect("arrays")) != expected) throw CheckpointError("array count does not match architecture");
    ckpt.params.for_each_layer([&](const std::string& name, const nn::DenseLayer& l) {
        auto w = hr.next();
        if (w.size() != 4 || w[0] != "array" || w[1] != name + ".weight" || to_int(w[2]) != l.weight.rows() ||
            to_int(w[3]) != l.weight.cols()) {
            throw CheckpointError("array entry for " + name + ".weight does not match architecture");
        }
        auto b = hr.next();
        if (b.size() != 3 || b[0] != "array" || b[1] != name + ".bias" || to_int(b[2]) != l.bias.size()) {
            throw CheckpointError("array entry for " + name + ".bias does not match architecture");
        }
    });
    auto end = hr.next();
    if (end.size() != 1 || end[0] != "end_header") throw CheckpointError("missing end_header");

    ckpt.params.for_each_layer([&](const std::string&, nn::DenseLayer& l) {
        read_le(is, l.weight.data(), l.weight.size());
        read_le(is, l.bias.data(), l.bias.size());
    });
    if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint data");
    return ckpt;
}

}  // namespace dps
