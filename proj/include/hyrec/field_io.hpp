#pragma once

#include <filesystem>
#include <string>

#include "hyrec/grid.hpp"

namespace hyrec {

// Field files: `<stem>.bin` holds interleaved little-endian float64
// (real, imag) pairs in grid point order, components innermost.
// `<stem>.json` is the sidecar {dim, bounds, shape, kind}.

const char* kind_name(FieldKind kind);

template <FieldKind K>
void write_field(const Field<K>& field, const std::filesystem::path& stem);

template <FieldKind K>
Field<K> read_field(const std::filesystem::path& stem);

/// Reads only the sidecar.
Grid read_field_grid(const std::filesystem::path& stem, FieldKind* kind = nullptr);

}  // namespace hyrec
