#pragma once

#include <string>

#include "driftguard/panel.hpp"

namespace driftguard {

/// Writes the panel to a single self-describing text file.
///
/// Layout: a version banner ("driftguard-panel v1"), then four sections
/// ([keys], [calendar], [sales], [prices]), each a CSV block with a header
/// row.  Sales and prices are row-per-series matrices whose first column is
/// the series ordinal.  Numbers are emitted in shortest round-trip form, so
/// load followed by save reproduces the file byte for byte.
void save_panel(const Panel& panel, const std::string& path);

/// Reads a file written by save_panel.  Throws IoError on a missing file or
/// version banner mismatch, SchemaError on malformed sections.
Panel load_panel(const std::string& path);

}  // namespace driftguard
