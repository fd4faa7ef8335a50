from typing import Union, IO

import mmap
import os
import gzip
import lzma

from .neural import Mlp

def _opener(filename:str):
  """Pick an open() for the compression implied by the file suffix."""
  ext = os.path.splitext(filename)[1]
  if ext == '.gz':
    return gzip.open
  elif ext in ('.lzma', '.xz'):
    return lzma.open
  return open

def _read(filelike:Union[str, IO], allow_mmap:bool = False) -> bytes:
  if hasattr(filelike, 'read'):
    return filelike.read()

  opener = _opener(filelike)
  with opener(filelike, 'rb') as f:
    if allow_mmap and opener is open:
      with mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ) as mm:
        return bytes(mm)
    return f.read()

def load(filename:Union[str, IO], allow_mmap:bool = False) -> Mlp:
  """Read a network snapshot, decompressing .gz and .xz/.lzma files."""
  return Mlp.from_snapshot(_read(filename, allow_mmap=allow_mmap))

def save(filename:Union[str, IO], net:Mlp):
  """Write a network snapshot, compressing for .gz and .xz/.lzma suffixes."""
  binary = net.to_snapshot()

  if hasattr(filename, 'write'):
    filename.write(binary)
    return

  with _opener(filename)(filename, 'wb') as f:
    f.write(binary)
