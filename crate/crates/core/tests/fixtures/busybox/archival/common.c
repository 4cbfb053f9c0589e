void *fopen_for_read(const char *path);

int unpack_archive(const char *name)
{
    return fopen_for_read(name) != 0;
}
