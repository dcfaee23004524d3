#include "thermoseed/cli.hpp"

int main(int argc, char** argv) { return thermoseed::cli::run(argc, argv); }
