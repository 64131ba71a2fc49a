#pragma once

#include <filesystem>
#include <vector>

namespace cy {

/// Scans result_dir recursively for trace.csv and writes SVG line charts
/// (log10 sup|v| and lambda against t, plus the barrier overlay when an
/// envelope.csv sits beside the trace) into the matching directory under
/// out_dir. Traces without rows are skipped with a warning on stderr.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& result_dir,
                                              const std::filesystem::path& out_dir);

}  // namespace cy
