#include "run_artifact.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

#include <json.hpp>
#include <openssl/evp.h>

#include "loadshed/errors.hpp"

namespace loadshed::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());

  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);

  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json file_list(const std::vector<std::filesystem::path>& files) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : files) {
    nlohmann::json e = {{"path", f.string()}};
    if (std::filesystem::is_regular_file(f)) e["sha256"] = sha256_file(f);
    arr.push_back(std::move(e));
  }
  return arr;
}

}  // namespace

std::filesystem::path RunArtifact::write(const std::filesystem::path& dir) const {
  nlohmann::json j;
  j["command"] = command;
  j["subcommand"] = subcommand;
  j["timestamp"] = utc_now();
  j["seed"] = seed;
  j["exit_code"] = exit_code;
  j["inputs"] = file_list(inputs);
  j["outputs"] = file_list(outputs);

  const auto path = dir / (subcommand + ".run.json");
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  return path;
}

}  // namespace loadshed::cli
