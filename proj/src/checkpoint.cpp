#include "thermsplat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "thermsplat/error.hpp"

namespace thermsplat::train {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int b = 0; b < 4; ++b) bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int b = 0; b < 8; ++b) bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        bytes_.append(s);
    }
    void doubles(std::span<const double> v) {
        u64(v.size());
        for (double d : v) f64(d);
    }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class Reader {
public:
    Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
        pos_ += 8;
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> doubles() {
        const std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> v(n);
        for (auto& d : v) d = f64();
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > bytes_.size() - pos_) throw DataError(what_ + ": truncated checkpoint block");
    }
    const std::string& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

void put_block(std::string& out, const char tag[5], const Writer& w) {
    out.append(tag, 4);
    Writer len;
    len.u64(w.bytes().size());
    out.append(len.bytes());
    out.append(w.bytes());
}

void copy_params(std::span<double> dst, const std::vector<double>& src, const std::string& what) {
    if (dst.size() != src.size()) {
        throw DataError("checkpoint " + what + " has " + std::to_string(src.size()) + " parameters, expected " +
                        std::to_string(dst.size()));
    }
    std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

void save_checkpoint(const TrainState& st, const std::filesystem::path& path) {
    std::string out = "THSP";
    Writer version;
    version.u32(kCheckpointVersion);
    out.append(version.bytes());

    Writer conf;
    conf.str(st.config.to_key_values().to_string());
    put_block(out, "CONF", conf);

    Writer gaus;
    const auto& gs = st.scene.gaussians;
    gaus.u64(gs.size());
    gaus.u32(gs.empty() ? 0 : static_cast<std::uint32_t>(gs[0].embedding.size()));
    for (const auto& g : gs) {
        for (int k = 0; k < 3; ++k) gaus.f64(g.mean[k]);
        for (int k = 0; k < 3; ++k) gaus.f64(g.log_scale[k]);
        for (int k = 0; k < 4; ++k) gaus.f64(g.rotation[k]);
        gaus.f64(g.opacity_logit);
        for (int k = 0; k < g.embedding.size(); ++k) gaus.f64(g.embedding[k]);
    }
    put_block(out, "GAUS", gaus);

    Writer femb;
    femb.u64(st.scene.frame_embeddings.size());
    femb.u32(static_cast<std::uint32_t>(st.config.frame_embedding_dim));
    femb.u32(static_cast<std::uint32_t>(st.scene.inference_frame));
    for (const auto& e : st.scene.frame_embeddings) {
        for (int k = 0; k < e.size(); ++k) femb.f64(e[k]);
    }
    put_block(out, "FEMB", femb);

    Writer emlp;
    emlp.doubles(st.emission.mlp().parameters());
    put_block(out, "EMLP", emlp);
    Writer bmlp;
    bmlp.doubles(st.background.mlp().parameters());
    put_block(out, "BMLP", bmlp);

    Writer adam;
    adam.i64(st.adam.step());
    adam.f64(st.adam.hyper().beta1);
    adam.f64(st.adam.hyper().beta2);
    adam.f64(st.adam.hyper().eps);
    adam.u32(static_cast<std::uint32_t>(st.adam.groups().size()));
    for (const auto& g : st.adam.groups()) {
        adam.str(g.name);
        adam.f64(g.lr);
        adam.f64(g.weight_decay);
        adam.doubles(g.m);
        adam.doubles(g.v);
    }
    put_block(out, "ADAM", adam);

    Writer iter;
    iter.i64(st.iteration);
    put_block(out, "ITER", iter);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(path.string() + ": cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError(path.string() + ": write failed");
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path.string() + ": cannot open checkpoint");
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string bytes = ss.str();
    const std::string what = path.string();
    if (bytes.size() < 8 || bytes.compare(0, 4, "THSP") != 0) throw DataError(what + ": not a checkpoint file");
    Reader head(bytes.substr(4, 4), what);
    const std::uint32_t version = head.u32();
    if (version != kCheckpointVersion) {
        throw DataError(what + ": unsupported checkpoint version " + std::to_string(version));
    }
    std::map<std::string, std::string> blocks;
    std::size_t pos = 8;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < 12) throw DataError(what + ": truncated block header");
        const std::string tag = bytes.substr(pos, 4);
        Reader len(bytes.substr(pos + 4, 8), what);
        const std::uint64_t n = len.u64();
        pos += 12;
        if (n > bytes.size() - pos) throw DataError(what + ": block " + tag + " overruns the file");
        blocks[tag] = bytes.substr(pos, n);
        pos += n;
    }
    for (const char* tag : {"CONF", "GAUS", "FEMB", "EMLP", "BMLP", "ADAM", "ITER"}) {
        if (!blocks.count(tag)) throw DataError(what + ": missing block " + tag);
    }

    Reader conf(blocks["CONF"], what);
    const TrainConfig cfg = TrainConfig::from(config::KeyValues::parse(conf.str(), what));

    Reader gaus(blocks["GAUS"], what);
    const std::uint64_t n = gaus.u64();
    const std::uint32_t dim = gaus.u32();
    std::vector<scene::Gaussian> gs(n);
    for (auto& g : gs) {
        for (int k = 0; k < 3; ++k) g.mean[k] = gaus.f64();
        for (int k = 0; k < 3; ++k) g.log_scale[k] = gaus.f64();
        for (int k = 0; k < 4; ++k) g.rotation[k] = gaus.f64();
        g.opacity_logit = gaus.f64();
        g.embedding.resize(dim);
        for (std::uint32_t k = 0; k < dim; ++k) g.embedding[k] = gaus.f64();
    }

    Reader femb(blocks["FEMB"], what);
    const std::uint64_t frames = femb.u64();
    const std::uint32_t fdim = femb.u32();
    const std::uint32_t inference = femb.u32();
    if (fdim != static_cast<std::uint32_t>(cfg.frame_embedding_dim)) throw DataError(what + ": frame embedding size mismatch");

    TrainConfig c = cfg;
    c.inference_frame = static_cast<int>(inference);
    TrainState st = initial_state(c, gs, static_cast<int>(frames));
    // initial_state renormalizes rotations; keep the stored bits so a reload is exact.
    for (std::size_t i = 0; i < gs.size(); ++i) st.scene.gaussians[i].rotation = gs[i].rotation;
    for (auto& e : st.scene.frame_embeddings) {
        for (std::uint32_t k = 0; k < fdim; ++k) e[k] = femb.f64();
    }

    Reader emlp(blocks["EMLP"], what);
    copy_params(st.emission.mlp().parameters(), emlp.doubles(), "emission MLP");
    Reader bmlp(blocks["BMLP"], what);
    copy_params(st.background.mlp().parameters(), bmlp.doubles(), "background MLP");

    Reader adam(blocks["ADAM"], what);
    const std::int64_t step = adam.i64();
    model::AdamHyper hyper;
    hyper.beta1 = adam.f64();
    hyper.beta2 = adam.f64();
    hyper.eps = adam.f64();
    st.adam = model::AdamState(hyper);
    st.adam.set_step(step);
    const std::uint32_t groups = adam.u32();
    for (std::uint32_t i = 0; i < groups; ++i) {
        const std::string name = adam.str();
        const double lr = adam.f64();
        const double wd = adam.f64();
        st.adam.configure(name, lr, wd);
        auto& g = st.adam.group(name);
        g.m = adam.doubles();
        g.v = adam.doubles();
    }

    Reader iter(blocks["ITER"], what);
    st.iteration = iter.i64();
    return st;
}

}  // namespace thermsplat::train
