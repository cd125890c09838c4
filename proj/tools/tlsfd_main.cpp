#include "tlsfd/cli.hpp"

int main(int argc, char** argv) { return tlsfd::cli_dispatch(argc, argv); }
