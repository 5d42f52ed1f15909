#pragma once

// Stand-ins for external programs (video encoder, PDF rasterizer) used by the tests.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fakes {

namespace fs = std::filesystem;

inline fs::path temp_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("slidecast_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

inline fs::path script(const fs::path& p, const std::string& body) {
    std::ofstream f(p);
    f << "#!/bin/sh\n" << body;
    f.close();
    fs::permissions(p, fs::perms::owner_all);
    return p;
}

/// Encoder that records argv in "<output>.args" and writes the number of stdin bytes into <output>.
inline fs::path encoder(const fs::path& dir) {
    return script(dir / "fake_ffmpeg",
                  "for a; do last=\"$a\"; done\n"
                  "printf '%s\\n' \"$@\" > \"$last.args\"\n"
                  "wc -c | tr -d ' ' > \"$last\"\n");
}

inline fs::path failing_encoder(const fs::path& dir, int code) {
    return script(dir / "broken_ffmpeg",
                  "cat >/dev/null\necho 'encoder exploded' >&2\nexit " + std::to_string(code) + "\n");
}

/// Rasterizer taking pdftoppm's arguments (-r DPI -png input prefix) that copies `pages`
/// to <prefix>-1.png, <prefix>-2.png, ...
inline fs::path rasterizer(const fs::path& dir, const std::vector<fs::path>& pages) {
    std::string body = "for a; do last=\"$a\"; done\n";
    for (std::size_t i = 0; i < pages.size(); ++i)
        body += "cp '" + pages[i].string() + "' \"$last-" + std::to_string(i + 1) + ".png\"\n";
    return script(dir / "fake_pdftoppm", body);
}

}  // namespace fakes
