import hashlib


def store_password(db, username, password):
    digest = hashlib.sha256(password.encode()).hexdigest()
    db[username] = digest
    return digest
