#include "smaui/cli.hpp"

int main(int argc, char** argv) { return smaui::cli::dispatch(argc, argv); }
