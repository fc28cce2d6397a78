#include "catds/cli.hpp"

int main(int argc, char** argv) { return catds::cli::dispatch(argc, argv); }
