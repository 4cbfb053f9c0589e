int helper_setup(int);
int lib2_log(int);
int lib2_flush(void);

int comp2_probe(int dev)
{
    int r = helper_setup(dev);
    lib2_log(r);
    return lib2_flush();
}
