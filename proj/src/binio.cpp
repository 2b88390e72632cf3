#include "binio.hpp"

#include <fstream>
#include <iterator>

#include "smaui/errors.hpp"

namespace smaui::binio {

void write(const std::filesystem::path& path, const std::string& magic, const nlohmann::json& manifest,
           const std::vector<double>& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << magic << '\n' << manifest.dump() << '\n';
  std::string bytes(payload.size() * 8, '\0');
  for (std::size_t i = 0; i < payload.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(payload[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint read(const std::filesystem::path& path, const std::string& magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != magic) {
    throw ParseError(path.string() + ": expected magic '" + magic + "'", 1);
  }
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing manifest", 2);
  Checkpoint cp;
  try {
    cp.manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": bad manifest: " + e.what(), 2);
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0) throw ParseError(path.string() + ": payload is not a whole number of float64");
  cp.payload.resize(bytes.size() / 8);
  for (std::size_t i = 0; i < cp.payload.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    cp.payload[i] = std::bit_cast<double>(bits);
  }
  return cp;
}

}  // namespace smaui::binio
