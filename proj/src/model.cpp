#include "shnn/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <sodium.h>

#include "shnn/error.hpp"

namespace shnn {

namespace {

constexpr const char* kModelFormat = "shnn-model/1";
constexpr const char* kParamEncoding = "f64le-base64";
constexpr int kBase64Variant = sodium_base64_VARIANT_ORIGINAL;

std::string to_base64(const std::vector<unsigned char>& bytes) {
  std::string out(sodium_base64_encoded_len(bytes.size(), kBase64Variant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), kBase64Variant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<unsigned char> from_base64(const std::string& text) {
  std::vector<unsigned char> out(text.size() * 3 / 4 + 3);
  std::size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len,
                        nullptr, kBase64Variant) != 0) {
    throw FormatError("model parameters are not valid base64");
  }
  out.resize(len);
  return out;
}

}  // namespace

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::ForwardEuler: return "forward-euler";
    case Scheme::SymplecticEuler: return "symplectic-euler";
    case Scheme::ImplicitMidpoint: return "implicit-midpoint";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "forward-euler") return Scheme::ForwardEuler;
  if (name == "symplectic-euler") return Scheme::SymplecticEuler;
  if (name == "implicit-midpoint") return Scheme::ImplicitMidpoint;
  throw InvalidArgument("unknown scheme '" + std::string(name) + "'");
}

PhaseVector scheme_point(Scheme scheme, const DataPair& pair) {
  if (pair.y0.size() != pair.y1.size() || pair.y0.size() % 2 != 0) {
    throw InvalidArgument("malformed data pair");
  }
  switch (scheme) {
    case Scheme::ForwardEuler:
      return pair.y0;
    case Scheme::SymplecticEuler: {
      const Eigen::Index n = pair.y0.size() / 2;
      PhaseVector s(2 * n);
      s.head(n) = pair.y1.head(n);
      s.tail(n) = pair.y0.tail(n);
      return s;
    }
    case Scheme::ImplicitMidpoint:
      return 0.5 * (pair.y0 + pair.y1);
  }
  throw InvalidArgument("unknown scheme");
}

std::string_view to_string(Correction c) {
  switch (c) {
    case Correction::None: return "none";
    case Correction::SeOrder2: return "se_order2";
    case Correction::SeOrder3: return "se_order3";
    case Correction::MpOrder4: return "mp_order4";
  }
  return "?";
}

Correction parse_correction(std::string_view name) {
  if (name == "none") return Correction::None;
  if (name == "se_order2") return Correction::SeOrder2;
  if (name == "se_order3") return Correction::SeOrder3;
  if (name == "mp_order4") return Correction::MpOrder4;
  throw InvalidArgument("unknown correction '" + std::string(name) + "'");
}

Correction correction_for_order(int order) {
  switch (order) {
    case 0: return Correction::None;
    case 2: return Correction::SeOrder2;
    case 3: return Correction::SeOrder3;
    case 4: return Correction::MpOrder4;
    default:
      throw InvalidArgument("correction order must be 0, 2, 3 or 4");
  }
}

void check_correction(Scheme s, Correction c) {
  const bool se = c == Correction::SeOrder2 || c == Correction::SeOrder3;
  if (se && s != Scheme::SymplecticEuler) {
    throw InvalidArgument(std::string(to_string(c)) +
                          " requires a model trained with symplectic-euler");
  }
  if (c == Correction::MpOrder4 && s != Scheme::ImplicitMidpoint) {
    throw InvalidArgument("mp_order4 requires a model trained with implicit-midpoint");
  }
}

std::string model_to_json(const LearnedHamiltonian& model) {
  if (sodium_init() < 0) throw Error("libsodium failed to initialize");
  nlohmann::ordered_json j;
  j["format"] = kModelFormat;
  j["n_dim"] = model.params.n_dim();
  j["L"] = model.params.depth();
  j["M"] = model.params.width();
  j["scheme"] = std::string(to_string(model.scheme));
  j["h"] = model.h;
  j["seed"] = model.seed;
  j["correction"] = std::string(to_string(model.correction));
  j["system"] = model.system;
  j["best_epoch"] = model.best_epoch;
  j["best_test_loss"] = model.best_test_loss;
  j["param_encoding"] = kParamEncoding;
  j["params"] = to_base64(serialize_parameters(model.params));
  return j.dump(2);
}

LearnedHamiltonian model_from_json(std::string_view text) {
  if (sodium_init() < 0) throw Error("libsodium failed to initialize");
  LearnedHamiltonian m;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string()) != kModelFormat) {
      throw FormatError("not a model file (missing or unknown format tag)");
    }
    if (j.value("param_encoding", std::string()) != kParamEncoding) {
      throw FormatError("unsupported parameter encoding");
    }
    const int n_dim = j.at("n_dim").get<int>();
    const int depth = j.at("L").get<int>();
    const int width = j.at("M").get<int>();
    const auto blob = from_base64(j.at("params").get<std::string>());
    m.params = deserialize_parameters(n_dim, depth, width, blob);
    m.scheme = parse_scheme(j.at("scheme").get<std::string>());
    m.h = j.at("h").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.correction = parse_correction(j.value("correction", std::string("none")));
    m.system = j.value("system", std::string());
    m.best_epoch = j.value("best_epoch", -1);
    m.best_test_loss = j.value("best_test_loss", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
  if (!(m.h > 0.0)) throw FormatError("model time step must be positive");
  check_correction(m.scheme, m.correction);
  return m;
}

void save_model(const LearnedHamiltonian& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << model_to_json(model) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

LearnedHamiltonian load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace shnn
