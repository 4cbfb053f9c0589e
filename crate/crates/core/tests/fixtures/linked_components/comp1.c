int lib1_open(int);
int lib1_read(int);
int lib2_log(int);

int comp1_probe(int dev)
{
    int fd = lib1_open(dev);
    if (fd < 0)
        return lib2_log(fd);
    return lib1_read(fd);
}
