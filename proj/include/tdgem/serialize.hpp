#pragma once

// Little-endian binary blobs with a JSON header, the container format for
// generator/mapper checkpoints. Layout:
//   8-byte magic | u32 header length | JSON header | raw payload

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tdgem/tensor.hpp"

namespace tdgem::serialize {

void append_u32_le(std::string& out, std::uint32_t v);
void append_f32_le(std::string& out, float v);
void append_f64_le(std::string& out, double v);
std::uint32_t read_u32_le(const unsigned char* p);
float read_f32_le(const unsigned char* p);
double read_f64_le(const unsigned char* p);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

struct Blob {
    std::string header_json;
    std::vector<double> payload;  // decoded f64 values
};

void write_blob(const std::filesystem::path& path, const std::string& magic8,
                const std::string& header_json, const std::vector<const Tensor*>& tensors);
Blob read_blob(const std::filesystem::path& path, const std::string& magic8);

}  // namespace tdgem::serialize
