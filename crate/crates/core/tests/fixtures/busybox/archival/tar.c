unsigned getopt32(char **argv, const char *applet_opts);
int unpack_archive(const char *name);

int tar_main(int argc, char **argv)
{
    getopt32(argv, "xvf:");
    return unpack_archive(argv[1]);
}
