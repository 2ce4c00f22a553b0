#include "pcnn/network.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace pcnn {

namespace fs = std::filesystem;

std::string loss_kind_name(LossKind k) {
    return k == LossKind::SoftmaxCrossEntropy ? "softmax_ce" : "mse";
}

LossKind loss_kind_from(const std::string& name) {
    if (name == "softmax_ce") return LossKind::SoftmaxCrossEntropy;
    if (name == "mse") return LossKind::MeanSquaredError;
    throw ConfigError("unknown loss kind '" + name + "'");
}

Network& Network::add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return *this;
}

std::string Network::layer_name(std::size_t i) const {
    return "l" + std::to_string(i) + "_" + layers_[i]->kind();
}

std::vector<std::size_t> Network::validate(const std::vector<std::size_t>& input_item_shape) const {
    std::vector<std::size_t> s = input_item_shape;
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
}

void Network::init_params(std::uint64_t seed) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Rng rng = Rng::stream(seed, "init.layer", i);
        layers_[i]->init_params(rng);
    }
}

Tensor Network::forward(const Tensor& x, bool train) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
}

Tensor Network::forward_record(const Tensor& x, std::vector<std::pair<std::string, Tensor>>& record) {
    Tensor cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        cur = layers_[i]->forward(cur, false);
        record.emplace_back(layer_name(i), cur);
    }
    return cur;
}

Tensor Network::backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
    return g;
}

void Network::zero_grad() {
    for (auto& l : layers_) l->zero_grad();
}

std::vector<ParamRef> Network::params() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_params(out, layer_name(i));
    return out;
}

LossOut Network::loss(const Tensor& pred, const std::vector<int>& labels) const {
    if (loss_ != LossKind::SoftmaxCrossEntropy) throw ConfigError("network loss head is not softmax_ce");
    return softmax_cross_entropy(pred, labels);
}

LossOut Network::loss(const Tensor& pred, const Tensor& targets) const {
    if (loss_ != LossKind::MeanSquaredError) throw ConfigError("network loss head is not mse");
    return mean_squared_error(pred, targets);
}

std::string Network::manifest() const {
    std::ostringstream os;
    os << "loss " << loss_kind_name(loss_) << "\n";
    for (const auto& l : layers_) os << l->manifest_line() << "\n";
    return os.str();
}

namespace {

std::map<std::string, std::string> parse_fields(std::istringstream& is) {
    std::map<std::string, std::string> kv;
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw DataError("bad manifest token '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

std::size_t need_sz(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("manifest missing field '" + key + "'");
    return std::size_t(std::stoull(it->second));
}

int field_int(const std::map<std::string, std::string>& kv, const std::string& key, int dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : std::stoi(it->second);
}

} // namespace

std::unique_ptr<Layer> layer_from_manifest_line(const std::string& line) {
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "relu") return std::make_unique<ActivationLayer>(ActKind::ReLU);
    if (kind == "tanh") return std::make_unique<ActivationLayer>(ActKind::Tanh);
    if (kind == "softsign") return std::make_unique<ActivationLayer>(ActKind::Softsign);
    if (kind == "maxpool") return std::make_unique<MaxPoolLayer>();
    if (kind == "flatten") return std::make_unique<FlattenLayer>();
    auto kv = parse_fields(is);
    if (kind == "conv")
        return std::make_unique<ConvLayer>(need_sz(kv, "in"), need_sz(kv, "out"), need_sz(kv, "kh"),
                                           need_sz(kv, "kw"), field_int(kv, "stride", 1), field_int(kv, "pad", 0));
    if (kind == "powconv") {
        const std::string mode = kv.count("mode") ? kv.at("mode") : "in";
        return std::make_unique<PowConvLayer>(need_sz(kv, "in"), need_sz(kv, "out"), need_sz(kv, "kh"),
                                              need_sz(kv, "kw"), field_int(kv, "stride", 1), field_int(kv, "pad", 0),
                                              mode == "in" ? PowMode::InChannel : PowMode::OutChannel,
                                              need_sz(kv, "lambda"), field_int(kv, "split_sign", 0) != 0,
                                              field_int(kv, "skip_negative", 0) != 0);
    }
    if (kind == "batchnorm")
        return std::make_unique<BatchNormLayer>(need_sz(kv, "features"), field_int(kv, "affine", 1) != 0);
    if (kind == "linear")
        return std::make_unique<LinearLayer>(need_sz(kv, "in"), need_sz(kv, "out"), field_int(kv, "bias", 1) != 0);
    if (kind == "psi") return std::make_unique<PsiLayer>(field_int(kv, "split_sign", 0) != 0);
    throw DataError("unknown layer kind '" + kind + "' in manifest");
}

Network Network::from_manifest(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    Network net;
    bool have_loss = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("loss ", 0) == 0) {
            if (have_loss) throw DataError("manifest declares more than one loss head");
            net.set_loss(loss_kind_from(line.substr(5)));
            have_loss = true;
            continue;
        }
        net.add(layer_from_manifest_line(line));
    }
    if (!have_loss) throw DataError("manifest declares no loss head");
    return net;
}

void Network::save(const std::string& dir) const {
    fs::create_directories(dir);
    {
        std::ofstream os(fs::path(dir) / "manifest.txt");
        if (!os) throw DataError("cannot write manifest in " + dir);
        os << manifest();
    }
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (const auto& [key, tensor] : layers_[i]->state())
            write_pct((fs::path(dir) / (layer_name(i) + "." + key + ".pct")).string(), tensor);
}

Network Network::load(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.txt");
    if (!is) throw DataError("cannot open checkpoint manifest in " + dir);
    std::stringstream buf;
    buf << is.rdbuf();
    Network net = from_manifest(buf.str());
    for (std::size_t i = 0; i < net.layers_.size(); ++i)
        for (const auto& [key, tensor] : net.layers_[i]->state()) {
            (void)tensor;
            const auto path = fs::path(dir) / (net.layer_name(i) + "." + key + ".pct");
            net.layers_[i]->load_state(key, read_pct(path.string()));
        }
    return net;
}

} // namespace pcnn
