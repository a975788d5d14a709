"""
Protocol core: ids, canonical encoding, keys, messages, committee and certificates.

Import from the submodules (core.uid, core.messages, core.certificates, ...);
this package stays import-free because coins.coconut and core.messages
reference each other's encodings.
"""
